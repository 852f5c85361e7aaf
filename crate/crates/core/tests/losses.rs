use lemon_core::losses::{
    combine, inter_local, intra_local, intra_local_from_sim, nt_xent, AnchorSum, Denominator,
    LossConfig,
};
use lemon_core::tensor::{Tape, Tensor};
use lemon_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn one_hot_rows(n: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(n, d);
    for i in 0..n {
        t.row_mut(i)[i] = 1.0;
    }
    t
}

fn mean(tape: &Tape, s: AnchorSum) -> f64 {
    s.mean(tape).unwrap().map_or(0.0, |v| tape.value(v).item())
}

fn nt(z1: &Tensor, z2: &Tensor, cfg: &LossConfig) -> f64 {
    let tape = Tape::new();
    let s = nt_xent(
        &tape,
        tape.constant(z1.clone()),
        tape.constant(z2.clone()),
        cfg,
    )
    .unwrap();
    mean(&tape, s)
}

fn intra(h: &Tensor, l: &Tensor, graph: &[usize], cfg: &LossConfig) -> (f64, usize) {
    let tape = Tape::new();
    let s = intra_local(
        &tape,
        tape.constant(h.clone()),
        tape.constant(l.clone()),
        graph,
        cfg,
    )
    .unwrap();
    (mean(&tape, s), s.count)
}

fn inter(h: &Tensor, l: &Tensor, graph: &[usize], cfg: &LossConfig) -> f64 {
    let tape = Tape::new();
    let s = inter_local(
        &tape,
        tape.constant(h.clone()),
        tape.constant(l.clone()),
        graph,
        cfg,
    )
    .unwrap();
    mean(&tape, s)
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// `−log(exp(s_ii/τ) / Σ_{j∈neg} exp(s_ij/τ))` evaluated literally.
fn term(a: &Tensor, b: &Tensor, i: usize, neg: impl Fn(usize) -> bool, tau: f64) -> f64 {
    let pos = (cos(a.row(i), b.row(i)) / tau).exp();
    let den: f64 = (0..b.rows())
        .filter(|&j| neg(j))
        .map(|j| (cos(a.row(i), b.row(j)) / tau).exp())
        .sum();
    -(pos / den).ln()
}

fn nt_oracle(z1: &Tensor, z2: &Tensor, tau: f64) -> f64 {
    let n = z1.rows();
    let mut total = 0.0;
    for i in 0..n {
        total += term(z1, z2, i, |j| j != i, tau);
        total += term(z2, z1, i, |j| j != i, tau);
    }
    total / (2 * n) as f64
}

fn intra_oracle(h: &Tensor, l: &Tensor, g: &[usize], tau: f64) -> f64 {
    let (mut total, mut count) = (0.0, 0);
    for i in 0..g.len() {
        if g.iter().filter(|&&x| x == g[i]).count() < 2 {
            continue;
        }
        total += term(h, l, i, |j| j != i && g[j] == g[i], tau);
        count += 1;
    }
    total / count as f64
}

fn inter_oracle(h: &Tensor, l: &Tensor, g: &[usize], tau: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..g.len() {
        total += term(h, l, i, |j| g[j] != g[i], tau);
        total += term(l, h, i, |j| g[j] != g[i], tau);
    }
    total / (2 * g.len()) as f64
}

#[test]
fn nt_xent_orthogonal_pairs() {
    let z = one_hot_rows(2, 4);
    assert!((nt(&z, &z, &LossConfig::default()) - (-10.0)).abs() < 1e-9);
}

#[test]
fn nt_xent_identical_embeddings() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let row = random(&mut rng, 1, 6);
    for n in 2..8 {
        let z = Tensor::from_rows(&vec![row.row(0).to_vec(); n]).unwrap();
        for tau in [0.1, 0.5, 2.0] {
            let cfg = LossConfig {
                tau,
                ..LossConfig::default()
            };
            assert!((nt(&z, &z, &cfg) - ((n - 1) as f64).ln()).abs() < 1e-9);
        }
    }
}

#[test]
fn strict_denominator_excludes_positive() {
    let z = Tensor::filled(3, 4, 0.5);
    let strict = nt(&z, &z, &LossConfig::default());
    let inclusive = nt(
        &z,
        &z,
        &LossConfig {
            denominator: Denominator::Inclusive,
            ..LossConfig::default()
        },
    );
    assert!((strict - 2f64.ln()).abs() < 1e-12);
    assert!((inclusive - 3f64.ln()).abs() < 1e-12);
    // the orthogonal case goes negative only under the strict form
    let o = one_hot_rows(2, 3);
    assert!(nt(&o, &o, &LossConfig::default()) < 0.0);
    let inc = nt(
        &o,
        &o,
        &LossConfig {
            denominator: Denominator::Inclusive,
            ..LossConfig::default()
        },
    );
    assert!(inc > 0.0);
    assert!((inc - (1.0 + (-10f64).exp()).ln()).abs() < 1e-12);
}

#[test]
fn intra_closed_forms() {
    let cfg = LossConfig::default();
    let h = one_hot_rows(2, 3);
    let (v, n) = intra(&h, &h, &[0, 0], &cfg);
    assert!((v + 10.0).abs() < 1e-9);
    assert_eq!(n, 2);
    // single-edge graphs are skipped
    let (v, n) = intra(&one_hot_rows(1, 3), &one_hot_rows(1, 3), &[0], &cfg);
    assert_eq!((v, n), (0.0, 0));
    // duplicate edges with identical embeddings: positive equals the sole negative
    let same = Tensor::filled(2, 3, 0.3);
    let (v, _) = intra(&same, &same, &[0, 0], &cfg);
    assert!(v.abs() < 1e-12);
}

#[test]
fn inter_closed_forms() {
    let cfg = LossConfig::default();
    // k negatives per anchor in both graphs
    for k in 1..5 {
        let h = one_hot_rows(2 * k, 2 * k);
        let g: Vec<usize> = (0..2 * k).map(|i| i / k).collect();
        assert!((inter(&h, &h, &g, &cfg) - (-10.0 + (k as f64).ln())).abs() < 1e-9);
    }
    // uneven graphs: anchors of the 2-edge graph see 3 negatives and vice versa
    let h = one_hot_rows(5, 5);
    let g = [0, 0, 1, 1, 1];
    let expected = -10.0 + (2.0 * 3f64.ln() + 3.0 * 2f64.ln()) / 5.0;
    assert!((inter(&h, &h, &g, &cfg) - expected).abs() < 1e-9);
    // identical embeddings everywhere: each term is log(#negatives)
    let same = Tensor::filled(5, 4, -0.2);
    let expected = (2.0 * 3f64.ln() + 3.0 * 2f64.ln()) / 5.0;
    assert!((inter(&same, &same, &g, &cfg) - expected).abs() < 1e-12);
}

#[test]
fn matches_literal_formulas_on_random_embeddings() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let cfg = LossConfig::default();
    for trial in 0..20 {
        let n = 2 + trial % 5;
        let (z1, z2) = (random(&mut rng, n, 7), random(&mut rng, n, 7));
        assert!((nt(&z1, &z2, &cfg) - nt_oracle(&z1, &z2, cfg.tau)).abs() < 1e-10);

        let g: Vec<usize> = [0, 0, 0, 1, 2, 2, 3, 3, 3, 3]
            .iter()
            .copied()
            .take(4 + trial % 7)
            .collect();
        let (h, l) = (random(&mut rng, g.len(), 5), random(&mut rng, g.len(), 5));
        assert!((intra(&h, &l, &g, &cfg).0 - intra_oracle(&h, &l, &g, cfg.tau)).abs() < 1e-10);
        if g.iter().any(|&x| x != g[0]) {
            assert!((inter(&h, &l, &g, &cfg) - inter_oracle(&h, &l, &g, cfg.tau)).abs() < 1e-10);
        }
    }
}

#[test]
fn cosine_scale_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = LossConfig::default();
    let g = [0, 0, 1, 1, 1, 2];
    let scaled = |t: &Tensor, s: f64| {
        Tensor::matrix(t.rows(), t.cols(), t.data().iter().map(|x| x * s).collect()).unwrap()
    };
    for _ in 0..10 {
        let (z1, z2) = (random(&mut rng, 4, 6), random(&mut rng, 4, 6));
        let (h, l) = (random(&mut rng, 6, 6), random(&mut rng, 6, 6));
        for s in [5.0, 0.01, 37.0] {
            assert!((nt(&z1, &z2, &cfg) - nt(&scaled(&z1, s), &z2, &cfg)).abs() < 1e-10);
            assert!(
                (intra(&h, &l, &g, &cfg).0 - intra(&h, &scaled(&l, s), &g, &cfg).0).abs() < 1e-10
            );
            assert!((inter(&h, &l, &g, &cfg) - inter(&scaled(&h, s), &l, &g, &cfg)).abs() < 1e-10);
        }
    }
}

#[test]
fn graph_order_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = LossConfig::default();
    let sizes = [3usize, 1, 2, 4];
    let g: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
        .collect();
    let (h, l) = (random(&mut rng, g.len(), 5), random(&mut rng, g.len(), 5));
    let (z1, z2) = (random(&mut rng, 4, 5), random(&mut rng, 4, 5));
    let order = [2usize, 0, 3, 1];

    let pick = |t: &Tensor, rows: &[usize]| {
        Tensor::from_rows(&rows.iter().map(|&r| t.row(r).to_vec()).collect::<Vec<_>>()).unwrap()
    };
    let gr = &g;
    let edge_rows: Vec<usize> = order
        .iter()
        .flat_map(|&k| (0..gr.len()).filter(move |&i| gr[i] == k))
        .collect();
    let g2: Vec<usize> = edge_rows
        .iter()
        .map(|&i| order.iter().position(|&k| k == g[i]).unwrap())
        .collect();

    assert!((nt(&z1, &z2, &cfg) - nt(&pick(&z1, &order), &pick(&z2, &order), &cfg)).abs() < 1e-10);
    let (h2, l2) = (pick(&h, &edge_rows), pick(&l, &edge_rows));
    assert!((intra(&h, &l, &g, &cfg).0 - intra(&h2, &l2, &g2, &cfg).0).abs() < 1e-10);
    assert!((inter(&h, &l, &g, &cfg) - inter(&h2, &l2, &g2, &cfg)).abs() < 1e-10);
}

#[test]
fn raising_positive_similarity_lowers_loss() {
    let cfg = LossConfig::default();
    let mut prev = f64::INFINITY;
    for step in 0..20 {
        let s = -0.9 + 0.095 * step as f64;
        let sim = Tensor::matrix(3, 3, vec![s, 0.2, -0.1, 0.3, 0.5, 0.0, 0.1, 0.4, 0.2]).unwrap();
        let tape = Tape::new();
        let out = intra_local_from_sim(&tape, tape.constant(sim), &[0, 0, 0], &cfg).unwrap();
        let v = mean(&tape, out);
        assert!(v < prev, "step {step}");
        prev = v;
    }
}

#[test]
fn too_few_graphs_rejected() {
    let cfg = LossConfig::default();
    let tape = Tape::new();
    let one = tape.constant(Tensor::filled(1, 3, 1.0));
    assert!(matches!(
        nt_xent(&tape, one, one, &cfg),
        Err(Error::BatchTooSmall { graphs: 1, .. })
    ));
    let h = tape.constant(random(&mut ChaCha8Rng::seed_from_u64(0), 3, 3));
    assert!(matches!(
        inter_local(&tape, h, h, &[0, 0, 0], &cfg),
        Err(Error::BatchTooSmall { .. })
    ));
}

#[test]
fn weighted_combination() {
    let cfg = LossConfig {
        alpha: 0.01,
        beta: 100.0,
        ..LossConfig::default()
    };
    let r = combine(1.5, 0.25, -2.0, [4, 6, 12], &cfg).unwrap();
    assert_eq!(r.l_total, 1.5 + 0.01 * -2.0 + 100.0 * 0.25);
    let zero = LossConfig {
        alpha: 0.0,
        beta: 0.0,
        ..LossConfig::default()
    };
    assert_eq!(combine(0.7, 3.0, 4.0, [0; 3], &zero).unwrap().l_total, 0.7);
    let ones = combine(0.5, 0.25, 0.125, [0; 3], &LossConfig::default()).unwrap();
    assert_eq!(ones.l_total, 0.875);
    assert!(combine(f64::NAN, 0.0, 0.0, [0; 3], &cfg).is_err());
}
