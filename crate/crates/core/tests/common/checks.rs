#![allow(clippy::needless_range_loop)]
//! Reusable property checks. Each returns a one-line summary on success and
//! a description of the first violation on failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sea_core::autodiff::Tape;
use sea_core::corpus::{generate_synthetic, synthetic_schema, Document, GeneratorConfig};
use sea_core::crf;
use sea_core::decoder::{total_loss, ArgumentHead, DetectionHead, LossWeights};
use sea_core::eagn::{normalize_adjacency, EdgeKind, EventGraph, Gcn, GcnConfig, MentionNode, SentenceEdges};
use sea_core::encoder::MentionSource;
use sea_core::eval::{evaluate_predictions, match_records, Counts};
use sea_core::gradcheck;
use sea_core::model::ModelConfig;
use sea_core::params::ParamStore;
use sea_core::tensor::Tensor;
use sea_core::train::{train, TrainConfig};

use super::{flat_doc, record, tiny_config, tiny_model, toy_document};

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Every parameter gradient of the complete loss on the two-sentence toy
/// document against central differences.
pub fn full_loss_gradients(tolerance: f64) -> Check {
    let mut model = tiny_model(tiny_config(), 11);
    super::jitter(&mut model, 0.3, 5);
    let doc = toy_document();
    let prep = model.prepare(&doc);
    let report = gradcheck::check(&model.store, 1e-5, 1e-5, |_| true, |tape| {
        let p = model.losses(tape, &prep, MentionSource::Gold)?;
        total_loss(tape, p.entity, p.detection, p.argument, &LossWeights::default())
    })
    .map_err(|e| e.to_string())?;
    let worst = report.worst().ok_or("no parameters checked")?;
    let entries: usize = report.params.iter().map(|p| p.entries).sum();
    ensure(report.max_rel_error() < tolerance, || {
        format!(
            "{}: analytic {} vs numeric {} (relative error {:.2e})",
            worst.name, worst.worst_analytic, worst.worst_numeric, worst.max_rel_error
        )
    })?;
    Ok(format!(
        "{} parameters, {entries} scalars, max relative error {:.2e}",
        report.params.len(),
        report.max_rel_error()
    ))
}

/// All label sequences of length `n` over `l` labels.
pub fn all_sequences(n: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..l).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// CRF negative log-likelihood and Viterbi against brute-force enumeration
/// for every length up to 6 and every label count up to 5.
pub fn crf_enumeration(instances_per_shape: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for n in 1..=6 {
        for l in 1..=5 {
            let seqs = all_sequences(n, l);
            for _ in 0..instances_per_shape {
                let em = random_vec(n * l, 2.0, &mut rng);
                let tr = random_vec(l * l, 2.0, &mut rng);
                let scores: Vec<f64> = seqs.iter().map(|y| crf::sequence_score(&em, &tr, y, l)).collect();
                let log_z = sea_core::tensor::log_sum_exp(&scores);
                let mut store = ParamStore::new(0);
                let em_id = store.add("em", Tensor::matrix(n, l, em.clone()).unwrap()).unwrap();
                let tr_id = store.add("tr", Tensor::matrix(l, l, tr.clone()).unwrap()).unwrap();
                for (y, s) in seqs.iter().zip(&scores) {
                    let mut tape = Tape::eval(&store);
                    let e = tape.param(em_id);
                    let t = tape.param(tr_id);
                    let nll = tape.crf_nll(e, t, y).map_err(|e| e.to_string())?;
                    let got = tape.value(nll).item().unwrap();
                    let want = log_z - s;
                    worst = worst.max((got - want).abs());
                    ensure((got - want).abs() <= 1e-6, || {
                        format!("n={n} l={l} gold {y:?}: loss {got} vs enumerated {want}")
                    })?;
                    checked += 1;
                }
                let (best, _) = scores
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
                let decoded = crf::viterbi(&em, &tr, n, l);
                ensure(decoded == seqs[best], || {
                    format!("n={n} l={l}: viterbi {decoded:?} vs enumerated argmax {:?}", seqs[best])
                })?;
            }
        }
    }
    Ok(format!("{checked} gold sequences, max loss deviation {worst:.1e}, all argmaxes exact"))
}

/// Dense `D^-1/2 (A + I) D^-1/2`, written independently of the library.
pub fn dense_normalized(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut s = a.to_vec();
    for (i, row) in s.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let deg: Vec<f64> = s.iter().map(|r| r.iter().sum()).collect();
    (0..n).map(|i| (0..n).map(|j| s[i][j] / (deg[i] * deg[j]).sqrt()).collect()).collect()
}

fn dense_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = b.len();
    let m = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| (0..m).map(|j| (0..k).map(|t| row[t] * b[t][j]).sum()).collect())
        .collect()
}

fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

/// Each GCN layer against `Â X W + b`, and the full stack against the
/// composed oracle, on random graphs of up to 20 nodes.
pub fn gcn_dense_oracle(graphs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 5;
    let mut worst: f64 = 0.0;
    for g in 0..graphs {
        let n = rng.gen_range(1..=20);
        let density = rng.gen_range(0.0..0.6);
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(density) {
                    a[i][j] = 1.0;
                    a[j][i] = 1.0;
                }
            }
        }
        let mut store = ParamStore::new(seed + g as u64);
        let net = Gcn::new(&mut store, "g", d, GcnConfig { layers: 3, residual: true, dropout: 0.0 }).unwrap();
        for p in store.iter_mut() {
            for v in p.value.data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let x: Vec<Vec<f64>> = (0..n).map(|_| random_vec(d, 1.0, &mut rng)).collect();
        let a_hat = dense_normalized(&a);
        let lib_adj = normalize_adjacency(&Tensor::from_rows(&a).unwrap());
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((lib_adj.get(i, j) - a_hat[i][j]).abs());
            }
        }
        let mut tape = Tape::eval(&store);
        let adj = tape.constant(lib_adj);
        let xv = tape.constant(Tensor::from_rows(&x).unwrap());
        let mut h = x.clone();
        for (l, layer) in net.layers.iter().enumerate() {
            let w = rows_of(store.value(layer.weight));
            let b = store.value(layer.bias).data().to_vec();
            let mut want = dense_matmul(&a_hat, &dense_matmul(&h, &w));
            for row in &mut want {
                for (v, bb) in row.iter_mut().zip(&b) {
                    *v += bb;
                }
            }
            let hv = tape.constant(Tensor::from_rows(&h).unwrap());
            let got = net.propagate(&mut tape, l, adj, hv).map_err(|e| e.to_string())?;
            let got = tape.value(got);
            for i in 0..n {
                for k in 0..d {
                    worst = worst.max((got.get(i, k) - want[i][k]).abs());
                }
            }
            h = want.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect();
        }
        let out = net.forward(&mut tape, adj, xv).map_err(|e| e.to_string())?;
        let out = tape.value(out);
        for i in 0..n {
            for k in 0..d {
                worst = worst.max((out.get(i, k) - (h[i][k] + x[i][k])).abs());
            }
        }
        ensure(worst <= 1e-6, || format!("graph {g} with {n} nodes deviates by {worst:.2e}"))?;
    }
    Ok(format!("{graphs} random graphs, max deviation {worst:.1e}"))
}

fn mentions(layout: &[(usize, &str)]) -> Vec<MentionNode> {
    layout.iter().map(|&(s, k)| MentionNode { sentence_index: s, entity_key: k.into() }).collect()
}

/// `(kind, expected count)` pairs for one hand-enumerated fixture.
pub struct GraphFixture {
    pub name: &'static str,
    pub graph: EventGraph,
    pub expected: Vec<(EdgeKind, usize)>,
    pub total: usize,
}

/// Three documents whose edge counts were enumerated by hand from the rules.
pub fn graph_fixtures() -> Vec<GraphFixture> {
    use EdgeKind::*;
    vec![
        // One sentence, no mentions, one type with two roles.
        GraphFixture {
            name: "empty sentence",
            graph: EventGraph::build(1, &[], &[2], SentenceEdges::AllPairs),
            expected: vec![
                (SentenceType, 1),
                (MentionRole, 0),
                (TypeRole, 2),
                (SentenceSentence, 0),
                (SameEntity, 0),
                (SameSentence, 0),
                (MentionSentence, 0),
            ],
            total: 3,
        },
        // Two sentences; "a" in both, "b" beside the second "a"; types with 2 and 1 roles.
        GraphFixture {
            name: "two sentences",
            graph: EventGraph::build(2, &mentions(&[(0, "a"), (1, "a"), (1, "b")]), &[2, 1], SentenceEdges::AllPairs),
            expected: vec![
                (SentenceType, 4),
                (MentionRole, 9),
                (TypeRole, 3),
                (SentenceSentence, 1),
                (SameEntity, 1),
                (SameSentence, 1),
                (MentionSentence, 3),
            ],
            total: 22,
        },
        // Four sentences with adjacent-only sentence links; "z" twice in one
        // sentence yields both a same-entity and a same-sentence edge.
        GraphFixture {
            name: "four sentences adjacent",
            graph: EventGraph::build(
                4,
                &mentions(&[(0, "x"), (0, "y"), (2, "x"), (3, "z"), (3, "z")]),
                &[3],
                SentenceEdges::Adjacent,
            ),
            expected: vec![
                (SentenceType, 4),
                (MentionRole, 15),
                (TypeRole, 3),
                (SentenceSentence, 3),
                (SameEntity, 2),
                (SameSentence, 2),
                (MentionSentence, 5),
            ],
            total: 34,
        },
    ]
}

pub fn graph_edge_counts() -> Check {
    let fixtures = graph_fixtures();
    for f in &fixtures {
        for &(kind, want) in &f.expected {
            let got = f.graph.count(kind);
            ensure(got == want, || format!("{}: {kind:?} has {got} edges, expected {want}", f.name))?;
        }
        ensure(f.graph.edges.len() == f.total, || {
            format!("{}: {} edges in total, expected {}", f.name, f.graph.edges.len(), f.total)
        })?;
    }
    Ok(format!("{} fixture documents", fixtures.len()))
}

/// Perturbing one type representation leaves every other detection logit
/// bitwise unchanged, and swapping two role representations swaps their
/// argument scores exactly.
pub fn decoder_invariants(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, types, entities) = (6, 4, 5);
    let mut store = ParamStore::new(seed);
    let det = DetectionHead::new(&mut store, "det", d).unwrap();
    let arg = ArgumentHead::new(&mut store, "arg", d).unwrap();
    let base = Tensor::matrix(types, d, random_vec(types * d, 1.0, &mut rng)).unwrap();
    let ent = Tensor::matrix(entities, d, random_vec(entities * d, 1.0, &mut rng)).unwrap();
    let roles = Tensor::matrix(2, d, random_vec(2 * d, 1.0, &mut rng)).unwrap();

    let detect = |t: &Tensor| -> Vec<u64> {
        let mut tape = Tape::eval(&store);
        let v = tape.constant(t.clone());
        let z = det.logits(&mut tape, v, 0.0).unwrap();
        tape.value(z).data().iter().map(|x| x.to_bits()).collect()
    };
    let reference = detect(&base);
    for k in 0..types {
        let mut perturbed = base.clone();
        for c in 0..d {
            perturbed.set(k, c, perturbed.get(k, c) + rng.gen_range(-3.0..3.0));
        }
        let got = detect(&perturbed);
        for m in (0..types).filter(|&m| m != k) {
            ensure(got[m] == reference[m], || format!("perturbing type {k} changed the logit of type {m}"))?;
        }
    }

    let score = |roles: &Tensor, r: usize| -> Vec<u64> {
        let mut tape = Tape::eval(&store);
        let e = tape.constant(ent.clone());
        let all = tape.constant(roles.clone());
        let row = tape.slice_rows(all, r, r + 1).unwrap();
        let z = arg.logits(&mut tape, e, Some(row), None, 0.0).unwrap();
        tape.value(z).data().iter().map(|x| x.to_bits()).collect()
    };
    let swapped = Tensor::from_rows(&[roles.row_slice(1).to_vec(), roles.row_slice(0).to_vec()]).unwrap();
    ensure(score(&roles, 0) == score(&swapped, 1) && score(&roles, 1) == score(&swapped, 0), || {
        "swapping two role representations did not swap their scores".into()
    })?;
    ensure(score(&roles, 0) != score(&roles, 1), || "distinct roles scored identically".into())?;
    Ok(format!("{types} types perturbed one at a time, role swap exact"))
}

/// A small training configuration used for the determinism check.
pub fn determinism_config(seed: u64) -> (TrainConfig, GeneratorConfig) {
    let model = ModelConfig { d_model: 8, d_ff: 16, heads: 2, encoder_layers: 1, ere_layers: 1, ..ModelConfig::default() };
    let cfg = TrainConfig { epochs: 2, batch_size: 4, seed, model, ..TrainConfig::default() };
    (cfg, GeneratorConfig { num_documents: 8, ..GeneratorConfig::default() })
}

/// Two identical runs give bitwise-equal first-step losses and equal reports.
pub fn determinism(seed: u64) -> Check {
    let (cfg, gen) = determinism_config(seed);
    let docs = generate_synthetic(&gen, seed).map_err(|e| e.to_string())?;
    let schema = synthetic_schema(&gen);
    let run = || -> Result<(u64, String), String> {
        let out = train(&docs, Some(&docs), &schema, &cfg, |_| {}).map_err(|e| e.to_string())?;
        let loss = out.first_step_loss.ok_or("no training step ran")?;
        let report = sea_core::eval::evaluate(&out.model, &docs).map_err(|e| e.to_string())?;
        Ok((loss.to_bits(), serde_json::to_string(&report).unwrap()))
    };
    let (a, b) = (run()?, run()?);
    ensure(a.0 == b.0, || format!("first-step loss {} vs {}", f64::from_bits(a.0), f64::from_bits(b.0)))?;
    ensure(a.1 == b.1, || "metrics reports differ between identical runs".into())?;
    Ok(format!("first-step loss {:.6} reproduced bitwise, reports identical", f64::from_bits(a.0)))
}

/// Hand-counted alignment and aggregation fixtures.
pub fn metric_fixtures() -> Check {
    let cases: Vec<(&str, Counts, Counts)> = vec![
        (
            "identical",
            match_records(
                &[record("A", &[("r1", Some("a")), ("r2", Some("b"))])],
                &[record("A", &[("r1", Some("a")), ("r2", Some("b"))])],
            )
            .counts,
            Counts { tp: 2, fp: 0, fn_: 0 },
        ),
        (
            "one wrong slot",
            match_records(
                &[record("A", &[("r1", Some("a")), ("r2", Some("c"))])],
                &[record("A", &[("r1", Some("a")), ("r2", Some("b"))])],
            )
            .counts,
            Counts { tp: 1, fp: 1, fn_: 1 },
        ),
        (
            "best overlap first",
            match_records(
                &[record("A", &[("r1", Some("a")), ("r2", Some("x"))]), record("A", &[("r1", Some("a")), ("r2", Some("b"))])],
                &[record("A", &[("r1", Some("a")), ("r2", Some("b")), ("r3", Some("c"))])],
            )
            .counts,
            Counts { tp: 2, fp: 2, fn_: 1 },
        ),
        (
            "types never cross",
            match_records(&[record("A", &[("r", Some("a"))])], &[record("B", &[("r", Some("a"))])]).counts,
            Counts { tp: 0, fp: 1, fn_: 1 },
        ),
        (
            "null slots ignored",
            match_records(&[record("A", &[("r1", Some("a")), ("r2", None)])], &[record("A", &[("r1", Some("a"))])]).counts,
            Counts { tp: 1, fp: 0, fn_: 0 },
        ),
    ];
    for (name, got, want) in &cases {
        ensure(got == want, || format!("{name}: {got:?}, expected {want:?}"))?;
    }

    let (docs, preds) = evaluation_fixture();
    let report = evaluate_predictions(&docs, &preds).map_err(|e| e.to_string())?;
    let expect = [
        ("total", report.counts, Counts { tp: 5, fp: 2, fn_: 3 }),
        ("single", report.buckets["single"].score.counts, Counts { tp: 3, fp: 1, fn_: 1 }),
        ("multi", report.buckets["multi"].score.counts, Counts { tp: 2, fp: 1, fn_: 2 }),
        ("I", report.buckets["I"].score.counts, Counts { tp: 5, fp: 2, fn_: 3 }),
        ("II", report.buckets["II"].score.counts, Counts::default()),
        ("Pledge", report.per_type["Pledge"].counts, Counts { tp: 4, fp: 0, fn_: 2 }),
        ("Freeze", report.per_type["Freeze"].counts, Counts { tp: 1, fp: 2, fn_: 1 }),
    ];
    for (name, got, want) in &expect {
        ensure(got == want, || format!("evaluate {name}: {got:?}, expected {want:?}"))?;
    }
    let f1 = 2.0 * (5.0 / 7.0) * (5.0 / 8.0) / (5.0 / 7.0 + 5.0 / 8.0);
    ensure((report.f1 - f1).abs() < 1e-12, || format!("micro F1 {} vs {f1}", report.f1))?;
    Ok(format!("{} alignment fixtures and {} aggregate counts exact", cases.len(), expect.len()))
}

/// Three documents with hand-counted scores: tp 5, fp 2, fn 3 overall.
pub fn evaluation_fixture() -> (Vec<Document>, Vec<Vec<sea_core::corpus::EventRecord>>) {
    let pledge = |a: &str, b: &str| record("Pledge", &[("Pledger", Some(a)), ("Pledgee", Some(b))]);
    let freeze = |a: &str, b: &str| record("Freeze", &[("Holder", Some(a)), ("Court", Some(b))]);
    let docs = vec![
        flat_doc("d1", vec![pledge("acme", "bank")]),
        flat_doc("d2", vec![pledge("acme", "bank"), pledge("acme", "court")]),
        flat_doc("d3", vec![freeze("x", "y")]),
    ];
    let preds = vec![
        // Exact: tp 2.
        vec![pledge("acme", "bank")],
        // Aligns with the second gold record (tp 2); the first is missed
        // (fn 2); the Freeze prediction has no gold partner (fp 1).
        vec![pledge("acme", "court"), record("Freeze", &[("Holder", Some("acme"))])],
        // One right, one wrong: tp 1, fp 1, fn 1.
        vec![freeze("x", "z")],
    ];
    (docs, preds)
}
