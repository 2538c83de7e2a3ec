//! Acceptance suite. Every check prints one `PASS` or `FAIL` line; the
//! process exits nonzero if any check fails.
//!
//! Pass a substring as the first free argument to run only matching checks,
//! e.g. `cargo test -p proxylm --test acceptance -- privacy`.

use proxylm_core::backend::{MockBackend, RecordedBackend, SamplingParams, Style};
use proxylm_core::corpus::{oov_rate, tokenize, vocab_coverage, OOV_TOKEN};
use proxylm_core::experiment::{run_end_to_end, EndToEnd, ExperimentConfig};
use proxylm_core::fl::{
    clip_delta, l2_norm, partition_private_corpus, run_training, ClientDataset, RoundConfig,
    TrainingOptions, TreeAggregator,
};
use proxylm_core::model::{forward, loss_and_grad, windows};
use proxylm_core::par::Parallelism;
use proxylm_core::privacy::{zcdp_to_eps, zcdp_tree, PrivacySpec};
use proxylm_core::rng::{domain, stream};
use proxylm_core::synth::{filter_example, PromptKind, PromptTemplate, VariableAssignment};
use proxylm_core::{Corpus, Example, ModelConfig, ModelParameters, Source, Vocabulary};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

type Check = Result<String, String>;
type Criterion = (u8, &'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let checks: [Criterion; 10] = [
        (1, "gradient correctness", gradients),
        (2, "noiseless reduction", noiseless),
        (3, "clipping", clipping),
        (4, "tree noise law", tree_noise),
        (5, "privacy accountant", accountant),
        (6, "pipeline fidelity", pipeline_fidelity),
        (7, "chat-like pre-training advantage", pretraining_advantage),
        (8, "refinement", refinement),
        (9, "determinism and replay", determinism),
        (10, "corpus metrics", corpus_metrics),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in checks {
        if let Some(f) = &filter {
            if !name.contains(f.as_str()) && f != &id.to_string() {
                continue;
            }
        }
        ran += 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

fn reference_loss(p: &ModelParameters, batch: &[Vec<u32>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for s in batch {
        for w in windows(s, p.config().max_seq_len) {
            let lp = forward(p, &w[..w.len() - 1]).unwrap();
            for t in 0..w.len() - 1 {
                sum -= lp[t][w[t + 1] as usize];
                n += 1;
            }
        }
    }
    sum / n as f64
}

fn max_rel_error(cfg: ModelConfig, seed: u64) -> f64 {
    const STEP: f64 = 1e-4;
    let mut rng = stream(seed, &[0xACC, 1]);
    let flat: Vec<f64> = (0..cfg.param_count()).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut p = ModelParameters::from_flat(cfg, flat).unwrap();
    let batch: Vec<Vec<u32>> = (0..3)
        .map(|_| {
            let len = rng.random_range(2..=9);
            (0..len).map(|_| rng.random_range(0..cfg.vocab_size as u32)).collect()
        })
        .collect();
    let (_, grad) = loss_and_grad(&p, &batch, Parallelism::Sequential).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let orig = p.flat()[i];
        p.flat_mut()[i] = orig + STEP;
        let up = reference_loss(&p, &batch);
        p.flat_mut()[i] = orig - STEP;
        let down = reference_loss(&p, &batch);
        p.flat_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let denom = grad[i].abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    worst
}

fn gradients() -> Check {
    let start = Instant::now();
    let shapes = [(4, 2, 3, 3), (6, 3, 4, 5), (9, 5, 6, 4)];
    let mut worst: f64 = 0.0;
    for (v, e, h, len) in shapes {
        let cfg = ModelConfig {
            vocab_size: v,
            embed_dim: e,
            hidden_dim: h,
            max_seq_len: len,
        };
        for seed in 0..10 {
            let err = max_rel_error(cfg, seed);
            ensure(err < 1e-4, || format!("shape V{v} E{e} H{h} seed {seed}: rel err {err:e}"))?;
            worst = worst.max(err);
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("max rel err {worst:.2e} over 3 shapes x 10 seeds"))
}

// ---------------------------------------------------------------- 2

fn small_population(clients: usize) -> (ModelParameters, Vec<ClientDataset>) {
    let mock = MockBackend::profile(Style::ChatLike, 0.0);
    let corpus: Corpus = (0..clients as u64 * 3)
        .map(|i| mock.simulate_document(17, i, Source::PrivateSim))
        .collect();
    let vocab = Vocabulary::build(corpus.training_units().texts(), 150);
    let pop = partition_private_corpus(&corpus, &vocab, clients, 0.5, 4).unwrap();
    let cfg = ModelConfig {
        vocab_size: vocab.size(),
        embed_dim: 6,
        hidden_dim: 8,
        max_seq_len: 16,
    };
    (ModelParameters::init(cfg, 8).unwrap(), pop)
}

/// FedAvg with server momentum in cumulative form, written from the
/// algorithm statement without the library's server or client code.
fn reference_fedavg(w0: &ModelParameters, pop: &[ClientDataset], cfg: &RoundConfig) -> Vec<f64> {
    let dim = w0.flat().len();
    let mut prefix = vec![0.0; dim];
    let mut pbar = vec![0.0; dim];
    let mut w = w0.flat().to_vec();
    let mut last_round: Vec<Option<u64>> = vec![None; pop.len()];
    for t in 1..=cfg.rounds {
        let mut eligible: Vec<u64> = pop
            .iter()
            .filter(|c| last_round[c.client_id as usize].map_or(true, |l| t - l >= cfg.min_separation))
            .map(|c| c.client_id)
            .collect();
        eligible.sort();
        let mut rng = stream(cfg.seed, &[domain::CLIENT_SAMPLING, t]);
        for i in 0..cfg.clients_per_round {
            let j = rng.random_range(i..eligible.len());
            eligible.swap(i, j);
        }
        let mut chosen = eligible[..cfg.clients_per_round].to_vec();
        chosen.sort();
        let mut sum = vec![0.0; dim];
        for &id in &chosen {
            last_round[id as usize] = Some(t);
            let current = ModelParameters::from_flat(*w0.config(), w.clone()).unwrap();
            let mut theta = current.clone();
            let seqs: Vec<&[u32]> = pop[id as usize]
                .examples
                .iter()
                .filter(|e| e.ids.len() >= 2)
                .map(|e| e.ids.as_slice())
                .collect();
            for epoch in 0..cfg.local_epochs {
                let mut order: Vec<usize> = (0..seqs.len()).collect();
                order.shuffle(&mut stream(cfg.seed, &[domain::CLIENT_UPDATE, t, id, epoch]));
                for batch in order.chunks(cfg.local_batch_size) {
                    let b: Vec<&[u32]> = batch.iter().map(|&i| seqs[i]).collect();
                    let (_, g) = loss_and_grad(&theta, &b, Parallelism::Sequential).unwrap();
                    for (x, gi) in theta.flat_mut().iter_mut().zip(&g) {
                        *x -= cfg.client_lr * gi;
                    }
                }
            }
            let delta: Vec<f64> = theta.flat().iter().zip(current.flat()).map(|(a, b)| a - b).collect();
            let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            let mut clipped = delta.clone();
            if norm > cfg.clip_norm {
                let mut s = cfg.clip_norm / norm;
                loop {
                    for (c, d) in clipped.iter_mut().zip(&delta) {
                        *c = d * s;
                    }
                    if clipped.iter().map(|d| d * d).sum::<f64>().sqrt() <= cfg.clip_norm {
                        break;
                    }
                    s = f64::from_bits(s.to_bits() - 1);
                }
            }
            for (a, c) in sum.iter_mut().zip(&clipped) {
                *a += c;
            }
        }
        let inv = 1.0 / cfg.clients_per_round as f64;
        for i in 0..dim {
            prefix[i] += sum[i] * inv;
            pbar[i] = cfg.momentum * pbar[i] + prefix[i];
            w[i] = w0.flat()[i] + cfg.server_lr * pbar[i];
        }
    }
    w
}

fn noiseless() -> Check {
    let (w0, pop) = small_population(60);
    let cfg = RoundConfig {
        clients_per_round: 20,
        client_lr: 0.5,
        server_lr: 1.0,
        momentum: 0.9,
        rounds: 50,
        noise_multiplier: 0.0,
        clip_norm: 0.3,
        min_separation: 2,
        local_epochs: 1,
        local_batch_size: 4,
        seed: 2024,
    };
    let out = run_training(w0.clone(), &pop, &cfg, &TrainingOptions::default(), Parallelism::Rayon, |_, _| Ok(()))
        .map_err(|e| e.to_string())?;
    let reference = reference_fedavg(&w0, &pop, &cfg);
    let differing = out
        .params
        .flat()
        .iter()
        .zip(&reference)
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count();
    ensure(differing == 0, || format!("{differing} of {} weights differ", reference.len()))?;
    let clipped: usize = out.metrics.iter().map(|m| m.clipped).sum();
    Ok(format!(
        "{} weights identical after 50 rounds x 20 clients ({clipped} deltas clipped)",
        reference.len()
    ))
}

// ---------------------------------------------------------------- 3

fn clipping() -> Check {
    let mut rng = stream(3, &[0xACC]);
    let (mut below, mut above) = (0, 0);
    for i in 0..10_000 {
        let n = rng.random_range(1..300);
        let scale = 10f64.powf(rng.random_range(-4.0..4.0));
        let c = 10f64.powf(rng.random_range(-2.0..1.0));
        let delta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let norm = l2_norm(&delta);
        let (out, _) = clip_delta(delta.clone(), c);
        let out_norm = l2_norm(&out);
        ensure(out_norm <= c + 1e-9, || format!("delta {i}: norm {out_norm} > C {c}"))?;
        if norm <= c {
            below += 1;
            ensure(out.iter().zip(&delta).all(|(a, b)| a.to_bits() == b.to_bits()), || {
                format!("delta {i}: norm {norm} <= C {c} but was modified")
            })?;
        } else {
            above += 1;
        }
    }
    ensure(below > 100 && above > 100, || format!("degenerate draw: {below} below, {above} above"))?;
    Ok(format!("10000 deltas ({below} within C passed through, {above} clipped)"))
}

// ---------------------------------------------------------------- 4

fn tree_noise() -> Check {
    let sigma = 0.8;
    let dim = 4;
    let trials = 10_000u64;
    let mut sq = [0.0f64; 9];
    for trial in 0..trials {
        let mut tree = TreeAggregator::new(dim, sigma, 1_000_000 + trial);
        let mut exact = vec![0.0; dim];
        for t in 1..=8u64 {
            let x: Vec<f64> = (0..dim).map(|k| ((t * 5 + k as u64) % 7) as f64 * 0.1 - 0.3).collect();
            for (e, xi) in exact.iter_mut().zip(&x) {
                *e += xi;
            }
            let p = tree.push(&x);
            sq[t as usize] += p.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }
    let mut worst: f64 = 0.0;
    for t in [1u64, 3, 4, 5, 7, 8] {
        let empirical = sq[t as usize] / (trials as f64 * dim as f64);
        let expected = t.count_ones() as f64 * sigma * sigma;
        let rel = (empirical / expected - 1.0).abs();
        ensure(rel < 0.1, || format!("t={t}: variance {empirical:.4} vs {expected:.4}"))?;
        worst = worst.max(rel);
    }

    // State inspection: a node's noise is drawn once and reused by every
    // prefix it covers; the released prefix is exact sum plus covering noise.
    let mut tree = TreeAggregator::new(3, 1.0, 5);
    let mut exact = [0.0f64; 3];
    let mut seen: BTreeMap<(u32, u64), Vec<f64>> = BTreeMap::new();
    let mut reused = 0;
    for t in 1..=16u64 {
        let x = [t as f64, -(t as f64), 0.5];
        for (e, xi) in exact.iter_mut().zip(&x) {
            *e += xi;
        }
        let p = tree.push(&x);
        let cover = TreeAggregator::cover(t);
        ensure(cover.len() == t.count_ones() as usize, || format!("t={t}: cover {cover:?}"))?;
        let mut noise = [0.0f64; 3];
        for &(l, k) in &cover {
            let n = tree
                .node_noise(l, k)
                .ok_or_else(|| format!("t={t}: covering node ({l},{k}) not live"))?
                .to_vec();
            if let Some(prev) = seen.get(&(l, k)) {
                ensure(prev == &n, || format!("node ({l},{k}) resampled at t={t}"))?;
                reused += 1;
            }
            seen.insert((l, k), n.clone());
            for (s, v) in noise.iter_mut().zip(&n) {
                *s += v;
            }
        }
        for i in 0..3 {
            ensure((p[i] - exact[i] - noise[i]).abs() < 1e-9, || format!("t={t}: prefix off"))?;
        }
    }
    ensure(reused > 0, || "no node was reused".into())?;
    Ok(format!(
        "max variance deviation {:.1}% over 10000 trials; {reused} node reuses verified",
        worst * 100.0
    ))
}

// ---------------------------------------------------------------- 5

fn spec(t: u64, k: u64, z: f64) -> PrivacySpec {
    PrivacySpec {
        total_rounds: t,
        max_participations: k,
        min_separation: 1,
        noise_multiplier: z,
        target_delta: 1e-10,
    }
}

fn accountant() -> Check {
    let rho = zcdp_tree(&spec(8, 1, 1.0)).map_err(|x| x.to_string())?;
    ensure(rho == 2.0, || format!("zcdp_tree(8,1,1) = {rho}"))?;
    let eps42 = zcdp_to_eps(0.42, 1e-10).map_err(|x| x.to_string())?;
    ensure((6.63..=6.65).contains(&eps42) && eps42 >= 5.95, || {
        format!("eps(0.42) = {eps42:.4}, want [6.63, 6.65]")
    })?;
    let eps50 = zcdp_to_eps(0.5, 1e-10).map_err(|x| x.to_string())?;

    let mut runner = TestRunner::new(PropConfig {
        cases: 512,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner
        .run(&(100u64..5000, 1u64..50, 1u64..50, 0.05f64..20.0, 0.0f64..1.0), |(t, k, dk, z, f)| {
            let base = zcdp_tree(&spec(t, k, z)).unwrap();
            prop_assert!(zcdp_tree(&spec(t, k + dk, z)).unwrap() >= base);
            prop_assert!(zcdp_tree(&spec(t * 2, k, z)).unwrap() >= base);
            prop_assert!(zcdp_tree(&spec(t, k, z * (1.0 + f))).unwrap() <= base);
            Ok(())
        })
        .map_err(|x| format!("rho monotonicity: {x}"))?;
    runner
        .run(&(1e-4f64..50.0, 1e-3f64..1.0, 1e-15f64..1e-2, 0.0f64..1.0), |(rho, f, delta, g)| {
            let base = zcdp_to_eps(rho, delta).unwrap();
            prop_assert!(zcdp_to_eps(rho * (1.0 + f), delta).unwrap() >= base);
            prop_assert!(zcdp_to_eps(rho, delta * g.max(1e-3)).unwrap() >= base);
            Ok(())
        })
        .map_err(|x| format!("eps monotonicity: {x}"))?;

    ensure((7.20..=7.23).contains(&eps50) && eps50 >= 6.55, || {
        format!(
            "eps(0.5) = {eps50:.4}, outside [7.20, 7.23]; the other values pass \
             (rho tree = 2.0, eps(0.42) = {eps42:.4}, monotonicity holds)"
        )
    })?;
    Ok(format!("rho(8,1,1) = 2.0, eps(0.42) = {eps42:.4}, eps(0.5) = {eps50:.4}, monotone"))
}

// ---------------------------------------------------------------- 6

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn pipeline_fidelity() -> Check {
    let text = std::fs::read_to_string(fixture("reference_examples.json")).map_err(|e| e.to_string())?;
    let v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;

    let d = &v["direct_example"];
    let s = |k: &str| d[k].as_str().unwrap_or_default().to_owned();
    let assignment = VariableAssignment::new(s("age"), s("gender"), s("time"), s("day"), s("chat_app"))
        .with_receiver(s("receiver"))
        .with_topic(s("topic"))
        .map_err(|e| e.to_string())?;
    let direct = PromptTemplate::builtin(PromptKind::GenConversation)
        .render_assignment(&assignment)
        .map_err(|e| e.to_string())?;
    ensure(squash(&direct) == squash(&s("query")), || format!("direct query differs:\n{direct}"))?;

    let c = &v["convert_example"];
    let convert = PromptTemplate::builtin(PromptKind::Transform)
        .render_text(c["article"].as_str().unwrap_or_default())
        .map_err(|e| e.to_string())?;
    ensure(squash(&convert) == squash(c["query"].as_str().unwrap_or_default()), || {
        format!("conversion query differs:\n{convert}")
    })?;

    let backend = RecordedBackend::from_jsonl(fixture("recorded_responses.jsonl")).map_err(|e| e.to_string())?;
    let mut replayed = 0;
    for (key, want) in [("filter_positive", true), ("filter_negative", false)] {
        let list = v[key].as_array().ok_or_else(|| format!("{key} missing"))?;
        ensure(list.len() == 4, || format!("{key}: {} snippets", list.len()))?;
        for snippet in list {
            let snippet = snippet.as_str().unwrap_or_default();
            let ex = Example::new(snippet, Source::Raw).map_err(|e| e.to_string())?;
            let got = filter_example(&backend, &ex, SamplingParams::default()).map_err(|e| e.to_string())?;
            ensure(got == want, || format!("{key}: {snippet:?} judged {got}"))?;
            replayed += 1;
        }
    }
    Ok(format!("2 prompts verbatim, {replayed} filter snippets replayed"))
}

// ---------------------------------------------------------------- 7, 8

fn end_to_end() -> &'static Result<(EndToEnd, Duration), String> {
    static RUN: OnceLock<Result<(EndToEnd, Duration), String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let cfg = ExperimentConfig::default();
        let out = run_end_to_end(&cfg, Parallelism::Rayon, &mut |_| {}).map_err(|e| e.to_string())?;
        Ok((out, start.elapsed()))
    })
}

fn pretraining_advantage() -> Check {
    let (run, elapsed) = end_to_end().as_ref().map_err(Clone::clone)?;
    let rel = run.chat_like_round0 / run.web_like_round0 - 1.0;
    let limit = 0.75 * run.total_rounds as f64;
    ensure(rel >= 0.10, || {
        format!(
            "round 0: chat-like {:.4} vs web-like {:.4} ({:+.1}%)",
            run.chat_like_round0,
            run.web_like_round0,
            rel * 100.0
        )
    })?;
    let matched = run.rounds_to_match;
    ensure(matched.is_some_and(|r| r as f64 <= limit), || {
        format!(
            "chat-like run reaches web-like final {:.4} at round {matched:?}, limit {limit}",
            run.web_like_final
        )
    })?;
    ensure(*elapsed < Duration::from_secs(15 * 60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "round 0 chat-like {:.4} vs web-like {:.4} ({:+.1}%); web-like round-{} accuracy {:.4} matched at round {} (limit {limit})",
        run.chat_like_round0,
        run.web_like_round0,
        rel * 100.0,
        run.total_rounds,
        run.web_like_final,
        matched.unwrap_or_default()
    ))
}

fn refinement() -> Check {
    let (run, _) = end_to_end().as_ref().map_err(Clone::clone)?;
    let r = &run.refine;
    let floor = r.unrefined.mean * (1.0 - 0.005);
    ensure(r.refined.mean >= floor, || {
        format!("refined {:.4} < unrefined {:.4} - 0.5%", r.refined.mean, r.unrefined.mean)
    })?;
    ensure(!r.stats.per_source.is_empty(), || "no per-source retention stats".into())?;
    let kept: usize = r.stats.per_source.values().map(|x| x.kept).sum();
    let total: usize = r.stats.per_source.values().map(|x| x.total).sum();
    ensure(kept == r.stats.overall.kept && total == r.stats.overall.total, || {
        "per-source retention does not add up".into()
    })?;
    let per: Vec<String> = r
        .stats
        .per_source
        .iter()
        .map(|(s, x)| format!("{s} {}/{}", x.kept, x.total))
        .collect();
    Ok(format!(
        "refined {:.4} vs unrefined {:.4}; kept {}",
        r.refined.mean,
        r.unrefined.mean,
        per.join(", ")
    ))
}

// ---------------------------------------------------------------- 9

const SMALL_CONFIG: &str = r#"
seed = 5

[synthesis]
raw_documents = 120
assignments = 12

[private]
conversations = 240
clients = 48
holdout_clients = 12

[vocab]
size = 300

[model]
embed_dim = 6
hidden_dim = 8
max_seq_len = 16

[pretrain]
steps = 20
batch_size = 8

[fl]
clients_per_round = 6
rounds = 6
min_separation = 2
eval_every = 3

[eval]
runs = 2
rounds = 2
clients_per_round = 4
"#;

fn proxylm(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_proxylm"))
        .args(args)
        .env_remove("RAYON_NUM_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("proxylm {args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let config = dir.join("config.toml");
    std::fs::write(&config, SMALL_CONFIG).map_err(|e| e.to_string())?;
    let run_dir = dir.join("run");
    let p = |name: &str| run_dir.join(name).display().to_string();
    let base = |threads: &str, out: &Path| {
        vec![
            "--config".to_owned(),
            config.display().to_string(),
            "--threads".to_owned(),
            threads.to_owned(),
            "--out".to_owned(),
            out.display().to_string(),
        ]
    };
    let steps: Vec<Vec<String>> = vec![
        vec!["simulate".into()],
        vec!["synth".into()],
        vec!["filter".into(), "--input".into(), p("raw.jsonl")],
        vec!["transform".into(), "--input".into(), p("filtered.jsonl")],
        vec!["vocab".into(), "--input".into(), p("raw.jsonl"), "--input".into(), p("generated_chat.jsonl")],
        vec![
            "pretrain".into(),
            "--vocab".into(),
            p("vocab.txt"),
            "--input".into(),
            p("filtered.jsonl"),
            "--input".into(),
            p("generated_chat.jsonl"),
            "--input".into(),
            p("transformed.jsonl"),
        ],
        vec![
            "flrun".into(),
            "--model".into(),
            p("model.json"),
            "--vocab".into(),
            p("vocab.txt"),
            "--private".into(),
            p("private.jsonl"),
        ],
        vec![
            "evaluate".into(),
            "--model".into(),
            p("fl_model.json"),
            "--vocab".into(),
            p("vocab.txt"),
            "--private".into(),
            p("private.jsonl"),
        ],
        vec![
            "refine".into(),
            "--pre".into(),
            p("model.json"),
            "--fine".into(),
            p("fl_model.json"),
            "--vocab".into(),
            p("vocab.txt"),
            "--input".into(),
            p("generated_chat.jsonl"),
        ],
        vec!["account".into()],
        vec!["experiment".into()],
    ];
    let mut names = Vec::new();
    for step in &steps {
        let mut args = base("1", &run_dir);
        args.extend(step.iter().cloned());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        proxylm(&refs)?;
        names.push(step[0].clone());
    }
    // Replay each manifest under a different pool size than the recorded run.
    let mut outputs = 0;
    for (i, name) in names.iter().enumerate() {
        let manifest = run_dir.join(format!("{name}.manifest.json"));
        let threads = ["2", "4", "0"][i % 3];
        let out_dir = dir.join(format!("replay-{name}"));
        let stdout = proxylm(&[
            "--threads",
            threads,
            "--out",
            &out_dir.display().to_string(),
            "replay",
            "--manifest",
            &manifest.display().to_string(),
        ])?;
        let v: Value = serde_json::from_str(stdout.trim()).map_err(|e| format!("{name}: {e}: {stdout}"))?;
        ensure(v["mismatched"].as_array().is_some_and(|a| a.is_empty()), || format!("{name}: {v}"))?;
        outputs += v["outputs"].as_u64().unwrap_or(0);
    }
    // Independent rerun of fine-tuning under a wider pool, compared byte for byte.
    let wide = dir.join("wide");
    let mut args = base("3", &wide);
    args.extend(steps[6].iter().cloned());
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    proxylm(&refs)?;
    for f in ["fl_model.json", "metrics.jsonl", "privacy.json"] {
        let a = std::fs::read(run_dir.join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(wide.join(f)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("flrun {f} differs between 1 and 3 threads"))?;
    }
    Ok(format!("{} subcommands replayed, {outputs} outputs byte-identical", names.len()))
}

// ---------------------------------------------------------------- 10

fn word(rng: &mut impl Rng) -> String {
    let len = rng.random_range(1..4);
    (0..len).map(|_| (b'a' + rng.random_range(0..5u8)) as char).collect()
}

fn corpus_metrics() -> Check {
    let mut checked = 0;
    for seed in 0..100u64 {
        let mut rng = stream(seed, &[0xACC, 10]);
        let mut vocab_words: Vec<String> = Vec::new();
        for _ in 0..rng.random_range(0..40) {
            let w = word(&mut rng);
            if !vocab_words.contains(&w) {
                vocab_words.push(w);
            }
        }
        let texts: Vec<String> = (0..rng.random_range(1..15))
            .map(|_| {
                let n = rng.random_range(1..20);
                (0..n).map(|_| word(&mut rng)).collect::<Vec<_>>().join(" ")
            })
            .collect();
        let vocab = Vocabulary::from_words(
            std::iter::once(OOV_TOKEN.to_owned()).chain(vocab_words.iter().cloned()),
            OOV_TOKEN,
        )
        .map_err(|e| e.to_string())?;
        let corpus: Corpus = texts.iter().map(|t| Example::new(t, Source::Raw).unwrap()).collect();

        let expected_cov = if vocab_words.is_empty() {
            0.0
        } else {
            let hit = vocab_words
                .iter()
                .filter(|v| texts.iter().any(|t| t.split(' ').any(|w| w == v.as_str())))
                .count();
            hit as f64 / vocab_words.len() as f64
        };
        let cov = vocab_coverage(&corpus, &vocab);
        ensure(cov == expected_cov, || format!("seed {seed}: coverage {cov} vs {expected_cov}"))?;
        for t in &texts {
            let toks: Vec<&str> = t.split(' ').collect();
            let oov = toks.iter().filter(|w| !vocab_words.iter().any(|v| v == *w)).count();
            let expected = oov as f64 / toks.len() as f64;
            let got = oov_rate(&tokenize(t, &vocab)).map_err(|e| e.to_string())?;
            ensure(got == expected, || format!("seed {seed}: oov {got} vs {expected} for {t:?}"))?;
            checked += 1;
        }
    }
    Ok(format!("100 corpora, {checked} texts, exact match"))
}
