mod common;

use common::{corpus, small_encoder};
use lemon_core::checkpoint::Checkpoint;
use lemon_core::encoder::DualHelixParams;
use lemon_core::graph::MolecularGraph;
use lemon_core::pipeline::{
    embed_corpus, epoch_means, pretrain, read_corpus, write_corpus, TrainConfig, Trainer,
};
use lemon_core::Error;

fn tiny(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        encoder: small_encoder(2, 8),
        ..TrainConfig::desk()
    }
}

#[test]
fn same_seed_same_checkpoint() {
    let graphs = corpus(24, (3, 12), 4);
    let a = pretrain(&graphs, &tiny(2)).unwrap();
    let b = pretrain(&graphs, &tiny(2)).unwrap();
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.transform_passes, 1);
    let other = pretrain(&graphs, &TrainConfig { seed: 1, ..tiny(2) }).unwrap();
    assert_ne!(a.checkpoint.to_bytes(), other.checkpoint.to_bytes());
}

#[test]
fn batch_order_does_not_change_step_zero_loss() {
    let graphs = corpus(8, (3, 12), 4);
    let trainer = Trainer::new(graphs, tiny(1)).unwrap();
    let a = trainer.evaluate(&[0, 1, 2, 3, 4, 5]).unwrap();
    let b = trainer.evaluate(&[4, 2, 5, 0, 3, 1]).unwrap();
    for (x, y) in [
        (a.l_graph, b.l_graph),
        (a.l_intra, b.l_intra),
        (a.l_inter, b.l_inter),
        (a.l_total, b.l_total),
    ] {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn identical_pair_has_zero_graph_loss_at_init() {
    let g = corpus(1, (5, 8), 4).remove(0);
    let cfg = TrainConfig {
        batch_size: 2,
        loss: lemon_core::losses::LossConfig {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        },
        ..tiny(1)
    };
    let trainer = Trainer::new(vec![g.clone(), g], cfg).unwrap();
    let r = trainer.evaluate(&[0, 1]).unwrap();
    assert!(r.l_graph.abs() < 1e-12, "{}", r.l_graph);
    assert_eq!(
        (r.l_intra, r.l_inter, r.intra_anchors, r.inter_anchors),
        (0.0, 0.0, 0, 0)
    );
}

#[test]
fn every_step_is_logged_with_consistent_totals() {
    let graphs = corpus(18, (3, 12), 4);
    let out = pretrain(&graphs, &tiny(3)).unwrap();
    // 18 graphs, batch 4: the incomplete last batch is dropped
    assert_eq!(out.metrics.len(), 3 * 4);
    for (k, m) in out.metrics.iter().enumerate() {
        assert_eq!(m.step, k as u64);
        assert_eq!(m.epoch, k as u64 / 4);
        let r = m.report;
        assert!((r.l_total - (r.l_graph + r.l_inter + r.l_intra)).abs() < 1e-12);
        assert_eq!(r.graph_anchors, 8);
        assert!(r.inter_anchors > 0 && r.intra_anchors > 0);
    }
    assert_eq!(epoch_means(&out.metrics).len(), 3);
}

#[test]
fn corpus_smaller_than_batch_rejected() {
    let graphs = corpus(3, (3, 6), 4);
    assert!(matches!(
        Trainer::new(graphs, tiny(1)),
        Err(Error::BatchTooSmall {
            graphs: 3,
            needed: 4
        })
    ));
}

#[test]
fn resume_requires_matching_encoder() {
    let graphs = corpus(8, (3, 8), 4);
    let ck = pretrain(&graphs, &tiny(1)).unwrap().checkpoint;
    let wider = TrainConfig {
        encoder: small_encoder(2, 16),
        ..tiny(2)
    };
    assert!(matches!(
        Trainer::resume(graphs, wider, ck),
        Err(Error::ConfigMismatch(_))
    ));
}

#[test]
fn checkpoint_save_load_save_is_byte_identical() {
    let graphs = corpus(8, (3, 8), 4);
    let ck = pretrain(&graphs, &tiny(1)).unwrap().checkpoint;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), std::fs::read(&path).unwrap());
}

#[test]
fn embeddings_ignore_chunking_and_relabeling() {
    let params = DualHelixParams::init(small_encoder(3, 8), 3).unwrap();
    let mut graphs = corpus(7, (3, 12), 4);
    let p: Vec<usize> = (0..graphs[2].num_nodes()).rev().collect();
    graphs.push(graphs[2].permuted(&p));
    let a = embed_corpus(&graphs, &params, 1).unwrap();
    let b = embed_corpus(&graphs, &params, 100).unwrap();
    assert_eq!(a.len(), graphs.len());
    for (x, y) in a.iter().zip(&b) {
        for (u, v) in x.iter().zip(y) {
            assert!((u - v).abs() < 1e-12);
        }
    }
    for (u, v) in a[2].iter().zip(&a[7]) {
        assert!((u - v).abs() < 1e-10);
    }
}

#[test]
fn corpus_text_round_trip() {
    let graphs: Vec<MolecularGraph> = corpus(1000, (2, 30), 5);
    let mut buf = Vec::new();
    write_corpus(&mut buf, &graphs).unwrap();
    assert_eq!(read_corpus(buf.as_slice()).unwrap().graphs, graphs);
}
