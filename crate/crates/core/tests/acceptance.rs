//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdqn::analysis::{collapse_threshold, kmeans2, silhouette, Threshold, DEFAULT_MAX_ITER};
use sdqn::cli::parse_spec_str;
use sdqn::explore::{AnnealSchedule, EvalPolicy};
use sdqn::game::{Action, AgentState, PayoffParams, Topology, TopologyKind};
use sdqn::learner::{double_dqn_target_1step, nstep_target, ReplayBuffer, TdConfig, Transition};
use sdqn::net::{
    loss_and_grad, LossConfig, OptimizerConfig, OptimizerKind, OptimizerState, QNetworkParams,
    Sample,
};
use sdqn::sim::{run, Architecture, RunConfig, Simulation};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let e = start.elapsed();
    check(
        e <= limit,
        format!(
            "took {:.1}s, limit {:.0}s",
            e.as_secs_f64(),
            limit.as_secs_f64()
        ),
    )
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for cfg in [LossConfig::default(), LossConfig::mse()] {
        for net in 0..100 {
            let mut p = QNetworkParams::init(5, 8, rng.gen()).map_err(|e| e.to_string())?;
            p.b1.iter_mut().for_each(|b| *b = rng.gen_range(-0.2..0.2));
            p.b2.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            let inputs: Vec<Vec<f64>> = (0..16)
                .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let batch: Vec<Sample> = inputs
                .iter()
                .map(|x| Sample {
                    input: x,
                    action: common::action(rng.gen()),
                    target: rng.gen_range(-3.0..3.0),
                })
                .collect();
            let (_, g) = loss_and_grad(&p, &batch, &cfg).map_err(|e| e.to_string())?;
            let fd = common::fd_gradient(&p, &batch, &cfg, 1e-6);
            let analytic: Vec<f64> = g.iter().copied().collect();
            let diff = analytic
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm_a = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
            let norm_f = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
            let rel = diff / (norm_a + norm_f).max(1e-12);
            worst = worst.max(rel);
            check(
                rel < 1e-4,
                format!("{:?} net {net}: relative error {rel:e}", cfg.kind),
            )?;
        }
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!("worst relative error {worst:.2e} over 200 nets"))
}

fn optimizer_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut compare = |got: f64, want: f64, what: &str| -> Result<(), String> {
        let err = (got - want).abs();
        worst = worst.max(err);
        check(err < 1e-10, format!("{what}: {got} vs {want}"))
    };

    // Hand-derived first steps on a lone scalar (the b1 slot of a 1x1 net).
    let scalar = |v: f64| {
        let mut p = QNetworkParams::zeros(1, 1);
        p.b1[0] = v;
        p
    };
    let first = |cfg: OptimizerConfig, p0: f64, g: f64| {
        let mut p = scalar(p0);
        let mut st = OptimizerState::new(cfg, &p);
        st.step(&mut p, &scalar(g)).unwrap();
        p.b1[0]
    };
    let adamw = OptimizerConfig::default();
    compare(
        first(adamw, 1.0, 1.0),
        1.0 - 1e-8 - 1e-4 / (1.0 + 1e-8),
        "adamw step 1",
    )?;
    let adam = OptimizerConfig {
        weight_decay: 0.01,
        ..OptimizerConfig::for_kind(OptimizerKind::Adam)
    };
    compare(
        first(adam, 1.0, 0.5),
        1.0 - 1e-4 * 0.51 / (0.51 + 1e-8),
        "adam step 1",
    )?;
    let rms = OptimizerConfig::for_kind(OptimizerKind::RmsProp);
    compare(
        first(rms, 1.0, 1.0),
        1.0 - 1e-4 / (0.1 + 1e-8),
        "rmsprop step 1",
    )?;

    // Ten steps of a constant gradient have closed forms.
    let ten = |cfg: OptimizerConfig, p0: f64, g: f64| {
        let mut p = scalar(p0);
        let mut st = OptimizerState::new(cfg, &p);
        for _ in 0..10 {
            st.step(&mut p, &scalar(g)).unwrap();
        }
        p.b1[0]
    };
    let (p0, g): (f64, f64) = (0.7, -0.3);
    let c: f64 = 1.0 - 1e-4 * 1e-4;
    let s = g / (g.abs() + 1e-8);
    let want = p0 * c.powi(10) - 1e-4 * s * (0..10).map(|k| c.powi(k)).sum::<f64>();
    compare(ten(adamw, p0, g), want, "adamw 10 steps")?;
    let mut want = p0;
    for t in 1..=10 {
        want -= 1e-4 * g / (g.abs() * (1.0 - 0.99f64.powi(t)).sqrt() + 1e-8);
    }
    compare(ten(rms, p0, g), want, "rmsprop 10 steps")?;

    // Ten steps with changing gradients on a 1x1 net (w1, b1 and one output
    // weight carry gradient) against the scalar reference.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (kind, wd) in [("adamw", 1e-4), ("adam", 1e-2), ("rmsprop", 1e-2)] {
        let cfg = OptimizerConfig {
            weight_decay: wd,
            ..OptimizerConfig::for_kind(match kind {
                "adamw" => OptimizerKind::AdamW,
                "adam" => OptimizerKind::Adam,
                _ => OptimizerKind::RmsProp,
            })
        };
        let mut p = QNetworkParams::zeros(1, 1);
        p.w1[0] = 0.4;
        p.b1[0] = -0.2;
        p.w2[0] = 1.1;
        let mut flat: Vec<f64> = p.iter().copied().collect();
        let mut st = OptimizerState::new(cfg, &p);
        let mut oracle = common::ScalarOpt::new(kind, wd, flat.len());
        for _ in 0..10 {
            let mut g = QNetworkParams::zeros(1, 1);
            g.w1[0] = rng.gen_range(-1.0..1.0);
            g.b1[0] = rng.gen_range(-1.0..1.0);
            g.w2[0] = rng.gen_range(-1.0..1.0);
            let gflat: Vec<f64> = g.iter().copied().collect();
            st.step(&mut p, &g).unwrap();
            oracle.step(&mut flat, &gflat);
        }
        for (a, b) in p.iter().zip(&flat) {
            compare(*a, *b, kind)?;
        }
    }
    Ok(format!("max deviation {worst:.1e}"))
}

fn random_state(rng: &mut ChaCha8Rng) -> (AgentState, usize) {
    let code = rng.gen_range(0..32usize);
    let bits = std::array::from_fn(|k| ((code >> k) & 1) as u8);
    (AgentState::new(bits, &[]).unwrap(), code)
}

fn target_equations() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut nstep_cases = 0;
    for case in 0..1000 {
        let online = QNetworkParams::init(5, 8, rng.gen()).unwrap();
        let target = QNetworkParams::init(5, 8, rng.gen()).unwrap();
        let (to, tt) = (common::q_table(&online), common::q_table(&target));
        let gamma = rng.gen_range(0.5..1.0);
        let n = rng.gen_range(1..=5usize);
        let len = rng.gen_range(1..=8u64);

        // Agent 3's trajectory, with occasional time gaps, interleaved with
        // another agent's transitions in a buffer that may evict early entries.
        let capacity = rng.gen_range(4..=24usize);
        let mut buf = ReplayBuffer::new(capacity);
        let mut log: Vec<(usize, u64, f64, usize)> = Vec::new(); // (agent, t, r, next code)
        let (mut s, mut t) = (random_state(&mut rng).0, 0u64);
        for _ in 0..len {
            t += if rng.gen_bool(0.15) { 2 } else { 1 };
            let (s_next, next_code) = random_state(&mut rng);
            let r = rng.gen_range(-1.0..2.0);
            buf.push(Transition {
                agent: 3,
                t,
                s: s.clone(),
                a: common::action(rng.gen()),
                r,
                s_next: s_next.clone(),
            });
            log.push((3, t, r, next_code));
            s = s_next;
            if rng.gen_bool(0.4) {
                let (other, other_code) = random_state(&mut rng);
                buf.push(Transition {
                    agent: 4,
                    t,
                    s: other.clone(),
                    a: Action::Cooperate,
                    r: 0.5,
                    s_next: other,
                });
                log.push((4, t, 0.5, other_code));
            }
        }
        let live = &log[log.len() - buf.len()..];
        for pos in 0..buf.len() {
            let tr = buf.get(pos).unwrap();
            let (agent, t0, r0, code0) = live[pos];
            check(
                tr.agent == agent && tr.t == t0,
                format!("case {case}: buffer order"),
            )?;
            let one = double_dqn_target_1step(tr, &online, &target, gamma);
            let want = common::nstep_oracle(&[r0], code0, &to, &tt, gamma);
            check(
                one.to_bits() == want.to_bits(),
                format!("case {case}: 1-step {one} vs {want}"),
            )?;
            let via_n = nstep_target(&buf, pos, 1, &online, &target, gamma).unwrap();
            check(
                via_n.to_bits() == one.to_bits(),
                format!("case {case}: n=1 differs"),
            )?;

            // Oracle chain: the next n live entries of this agent at t0, t0+1, ...
            let chain: Vec<_> = live[pos..]
                .iter()
                .filter(|e| e.0 == agent)
                .take(n)
                .collect();
            let valid =
                chain.len() == n && chain.iter().enumerate().all(|(k, e)| e.1 == t0 + k as u64);
            let got = nstep_target(&buf, pos, n, &online, &target, gamma);
            if valid {
                let rewards: Vec<f64> = chain.iter().map(|e| e.2).collect();
                let want = common::nstep_oracle(&rewards, chain[n - 1].3, &to, &tt, gamma);
                let got = got.ok_or(format!("case {case}: missing n-step target"))?;
                check(
                    got.to_bits() == want.to_bits(),
                    format!("case {case}: n-step {got} vs {want}"),
                )?;
                nstep_cases += 1;
            } else {
                check(
                    got.is_none(),
                    format!("case {case}: n-step target over a broken chain"),
                )?;
            }
        }
    }
    Ok(format!(
        "1000 cases, {nstep_cases} full n-step targets, all bitwise equal"
    ))
}

fn default_constants() -> Outcome {
    let spec = parse_spec_str("").map_err(|e| e.to_string())?;
    let r = &spec.run;
    let pay = |d_r: f64, d_g: f64, a: Action, b: Action| {
        PayoffParams::new(d_r, d_g).unwrap().payoff(a, b)
    };
    use Action::{Cooperate as C, Defect as D};
    let payoffs = [
        (pay(0.25, 0.25, C, C), 1.0),
        (pay(0.25, 0.25, C, D), -0.25),
        (pay(0.25, 0.25, D, C), 1.25),
        (pay(0.25, 0.25, D, D), 0.0),
        (pay(0.4, 0.1, C, D), -0.4),
    ];
    for (got, want) in payoffs {
        check(got == want, format!("payoff {got} vs {want}"))?;
    }
    let checks: [(&str, bool); 14] = [
        ("buffer 90000", r.buffer_capacity == 90_000),
        ("batch 256", r.td.batch_size == 256),
        ("gamma 0.99", r.td.gamma == 0.99),
        ("sync 2000", r.td.target_sync_interval == 2000),
        ("clip 0.5", r.td.max_grad_norm == 0.5),
        ("n-step 5", r.td.n_step == 5),
        (
            "tau_eval 0.10",
            r.eval_policy == EvalPolicy::Softmax { tau_eval: 0.10 },
        ),
        ("t_train 95000", r.t_train == 95_000),
        ("t_eval 5000", r.t_eval == 5_000),
        ("t_anneal 95000", r.schedule.t_anneal == 95_000),
        ("hidden 96", r.hidden_dim == 96),
        (
            "adamw 1e-4/1e-4",
            r.optimizer.kind == OptimizerKind::AdamW
                && r.optimizer.lr == 1e-4
                && r.optimizer.weight_decay == 1e-4,
        ),
        (
            "betas/eps",
            r.optimizer.beta1 == 0.9 && r.optimizer.beta2 == 0.999 && r.optimizer.eps == 1e-8,
        ),
        ("huber", r.loss == LossConfig::default()),
    ];
    for (name, ok) in checks {
        check(ok, name)?;
    }
    Ok("5 payoffs and 14 defaults".into())
}

fn topology_invariants() -> Outcome {
    let start = Instant::now();
    let graphs = [
        Topology::grid(30),
        Topology::random_regular(900, 1),
        Topology::small_world(900, 0.1, 1),
        Topology::modular(900, 9, 20, 1),
    ];
    for g in graphs {
        let g = g.map_err(|e| e.to_string())?;
        let name = g.kind().name();
        check(g.n_agents() == 900, format!("{name}: size"))?;
        for i in 0..900 {
            let nb = g.neighbors(i).unwrap();
            let mut sorted = *nb;
            sorted.sort_unstable();
            check(
                sorted.windows(2).all(|w| w[0] != w[1]),
                format!("{name}: repeated neighbour of {i}"),
            )?;
            check(!nb.contains(&i), format!("{name}: self loop at {i}"))?;
            for &j in nb {
                check(
                    g.neighbors(j).unwrap().contains(&i),
                    format!("{name}: {i}-{j} not symmetric"),
                )?;
            }
        }
    }
    let grid = Topology::grid(30).unwrap();
    check(grid.kind() == TopologyKind::Grid { side: 30 }, "grid kind")?;
    let spots = [
        (0, [870, 30, 29, 1]),
        (29, [899, 59, 28, 0]),
        (899, [869, 29, 898, 870]),
        (465, [435, 495, 464, 466]),
    ];
    for (i, want) in spots {
        check(
            grid.neighbors(i).unwrap() == &want,
            format!("grid neighbours of {i}"),
        )?;
    }
    within(Duration::from_secs(5), start)?;
    Ok(format!(
        "4 generators at n=900 in {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn small_run(seed: u64) -> RunConfig {
    RunConfig {
        grid_side: 10,
        schedule: AnnealSchedule {
            tau_init: 1.0,
            tau_final: 0.1,
            t_anneal: 5_000,
        },
        t_train: 5_000,
        t_eval: 500,
        activation_samples: 200,
        seed,
        ..RunConfig::default()
    }
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let a = run(&small_run(17)).map_err(|e| e.to_string())?;
    let b = run(&small_run(17)).map_err(|e| e.to_string())?;
    let same_trace = a
        .coop_trace
        .iter()
        .zip(&b.coop_trace)
        .all(|(x, y)| x.to_bits() == y.to_bits());
    check(a.coop_trace.len() == 5_500 && same_trace, "traces differ")?;
    check(
        a.final_probe.param_hash == b.final_probe.param_hash,
        "final parameter hashes differ",
    )?;
    within(Duration::from_secs(120), start)?;
    Ok(format!(
        "10x10, 5000+500 steps, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn evaluation_freeze() -> Outcome {
    let base = RunConfig {
        grid_side: 6,
        schedule: AnnealSchedule {
            tau_init: 1.0,
            tau_final: 0.1,
            t_anneal: 600,
        },
        t_train: 600,
        t_eval: 300,
        hidden_dim: 16,
        buffer_capacity: 5_000,
        td: TdConfig {
            batch_size: 32,
            target_sync_interval: 100,
            ..TdConfig::default()
        },
        activation_samples: 50,
        ..RunConfig::default()
    };
    let variants = [
        base.clone(),
        RunConfig {
            architecture: Architecture::Grouped { n_groups: 3 },
            ..base.clone()
        },
        RunConfig {
            architecture: Architecture::Grouped { n_groups: 3 },
            shared_replay: true,
            ..base.clone()
        },
        RunConfig {
            augmentation: sdqn::game::AugmentMode::Joint,
            eval_policy: EvalPolicy::Greedy,
            ..base.clone()
        },
    ];
    for (k, cfg) in variants.iter().enumerate() {
        let r = run(cfg).map_err(|e| e.to_string())?;
        check(
            r.train_probe.t == 600 && r.final_probe.t == 900,
            "probe times",
        )?;
        check(
            r.train_probe.param_hash == r.final_probe.param_hash,
            format!("variant {k}: parameters moved"),
        )?;
        check(
            r.train_probe.optimizer_steps == r.final_probe.optimizer_steps,
            format!("variant {k}: optimizer stepped"),
        )?;
        check(
            r.train_probe.buffer_lens == r.final_probe.buffer_lens,
            format!("variant {k}: buffer grew"),
        )?;
        check(
            r.train_probe.optimizer_steps.iter().all(|&s| s > 0),
            format!("variant {k}: no training happened"),
        )?;
    }
    Ok("hash, optimizer steps and buffer sizes frozen in 4 variants".into())
}

struct DeskPoint {
    tau_init: f64,
    b: f64,
    coop: Vec<f64>,
    q_gap: Vec<f64>,
    q_mean: Vec<f64>,
}

fn desk_sweep() -> Result<Vec<DeskPoint>, String> {
    let mut out = Vec::new();
    for tau_init in [0.2, 0.6, 1.2] {
        let mut p = DeskPoint {
            tau_init,
            b: 0.0,
            coop: vec![],
            q_gap: vec![],
            q_mean: vec![],
        };
        for seed in 0..3 {
            let cfg = RunConfig {
                grid_side: 15,
                d_r: 0.25,
                d_g: 0.25,
                schedule: AnnealSchedule {
                    tau_init,
                    tau_final: 0.10,
                    t_anneal: 30_000,
                },
                t_train: 30_000,
                t_eval: 3_000,
                seed,
                ..RunConfig::default()
            };
            let r = run(&cfg).map_err(|e| e.to_string())?;
            p.b = r.exploration_strength;
            p.coop.push(r.coop_mean);
            p.q_gap.push(r.q_gap);
            p.q_mean.push(r.q_mean);
        }
        out.push(p);
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn collapse_trend(sweep: &Result<Vec<DeskPoint>, String>) -> Outcome {
    let pts = sweep.as_ref().map_err(Clone::clone)?;
    let (low, high) = (&pts[0], &pts[pts.len() - 1]);
    let (cl, ch) = (mean(&low.coop), mean(&high.coop));
    let summary = pts
        .iter()
        .map(|p| {
            format!(
                "tau_init={} B={:.3} C={:.3}",
                p.tau_init,
                p.b,
                mean(&p.coop)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    check(
        cl > ch && cl - ch >= 0.1,
        format!("low-B {cl:.3} vs high-B {ch:.3}: {summary}"),
    )?;
    Ok(summary)
}

fn q_gap_trend(sweep: &Result<Vec<DeskPoint>, String>) -> Outcome {
    let pts = sweep.as_ref().map_err(Clone::clone)?;
    let (gl, gh) = (mean(&pts[0].q_gap), mean(&pts[pts.len() - 1].q_gap));
    let finite = pts
        .iter()
        .flat_map(|p| &p.q_mean)
        .all(|q| q.is_finite() && *q < 1e3);
    let summary = pts
        .iter()
        .map(|p| {
            format!(
                "B={:.3} gap={:.3} mean={:.3}",
                p.b,
                mean(&p.q_gap),
                mean(&p.q_mean)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    check(
        gh < gl,
        format!("q_gap high-B {gh:.3} not below low-B {gl:.3}: {summary}"),
    )?;
    check(finite, format!("q_mean out of range: {summary}"))?;
    Ok(summary)
}

fn silhouette_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for set in 0..50 {
        let n = rng.gen_range(2..=200usize);
        let dim = rng.gen_range(1..=6usize);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let got = silhouette(&points, &labels).map_err(|e| e.to_string())?;
        let want = common::silhouette(&points, &labels);
        worst = worst.max((got - want).abs());
        check(
            (got - want).abs() <= 1e-12,
            format!("set {set}: {got} vs {want}"),
        )?;
    }
    let mut hits = 0;
    for trial in 0..100u64 {
        let n = rng.gen_range(3..=12usize);
        let dim = rng.gen_range(1..=3usize);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        let fit = kmeans2(&points, trial, DEFAULT_MAX_ITER).map_err(|e| e.to_string())?;
        let best = common::best_two_partition_sse(&points);
        if (fit.sse - best).abs() <= 1e-9 * best.max(1.0) {
            hits += 1;
        }
    }
    check(hits >= 95, format!("k-means optimal in {hits}/100 trials"))?;
    Ok(format!(
        "silhouette max deviation {worst:.1e}; k-means optimal in {hits}/100"
    ))
}

fn threshold_extraction() -> Outcome {
    let d: Vec<f64> = (0..7).map(|k| 0.10 + 0.05 * k as f64).collect();
    let grid: Vec<(f64, f64)> = d
        .iter()
        .copied()
        .zip([0.9, 0.8, 0.7, 0.5, 0.4, 0.3, 0.2])
        .collect();
    let t = collapse_threshold(&grid, 0.55, true).map_err(|e| e.to_string())?;
    check(
        matches!(t, Threshold::Value(v) if (v - 0.20).abs() < 1e-12),
        format!("got {t:?}"),
    )?;
    let above: Vec<_> = d.iter().map(|&x| (x, 0.9)).collect();
    let below: Vec<_> = d.iter().map(|&x| (x, 0.1)).collect();
    check(
        collapse_threshold(&above, 0.55, true).unwrap() == Threshold::AboveRange,
        "all above",
    )?;
    check(
        collapse_threshold(&below, 0.55, true).unwrap() == Threshold::BelowRange,
        "all below",
    )?;
    Ok("0.20, AboveRange, BelowRange".into())
}

fn grouped_isolation() -> Outcome {
    let cfg = RunConfig {
        grid_side: 6,
        architecture: Architecture::Grouped { n_groups: 4 },
        schedule: AnnealSchedule {
            tau_init: 1.0,
            tau_final: 0.1,
            t_anneal: 200,
        },
        t_train: 200,
        t_eval: 20,
        hidden_dim: 16,
        td: TdConfig {
            batch_size: 16,
            ..TdConfig::default()
        },
        activation_samples: 10,
        seed: 3,
        ..RunConfig::default()
    };
    let mut sim = Simulation::new(cfg.clone()).map_err(|e| e.to_string())?;
    for _ in 0..50 {
        sim.step().map_err(|e| e.to_string())?;
    }
    let hashes = |s: &Simulation| {
        s.groups()
            .iter()
            .map(|g| g.online.hash_hex())
            .collect::<Vec<_>>()
    };
    for g in 0..4 {
        for _ in 0..3 {
            let before = hashes(&sim);
            sim.train_group(g).map_err(|e| e.to_string())?;
            let after = hashes(&sim);
            let changed: Vec<usize> = (0..4).filter(|&k| before[k] != after[k]).collect();
            check(
                changed == vec![g],
                format!("training group {g} changed groups {changed:?}"),
            )?;
        }
    }

    let shared = RunConfig {
        architecture: Architecture::Shared,
        ..cfg.clone()
    };
    let one = RunConfig {
        architecture: Architecture::Grouped { n_groups: 1 },
        ..cfg
    };
    let (a, b) = (
        run(&shared).map_err(|e| e.to_string())?,
        run(&one).map_err(|e| e.to_string())?,
    );
    check(
        a.coop_trace == b.coop_trace,
        "shared and single-group traces differ",
    )?;
    check(
        a.final_probe.param_hash == b.final_probe.param_hash,
        "shared and single-group parameters differ",
    )?;
    Ok("12 isolated updates; shared == grouped(1)".into())
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    // Like the default harness, a free argument filters criteria by name.
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let start = Instant::now();
    let sweep = std::cell::OnceCell::new();
    let desk = || sweep.get_or_init(desk_sweep);
    let criteria: Vec<(&str, Criterion<'_>)> = vec![
        ("gradient correctness", Box::new(gradient_correctness)),
        ("optimizer oracle", Box::new(optimizer_oracle)),
        ("target equations", Box::new(target_equations)),
        ("default constants", Box::new(default_constants)),
        ("topology invariants", Box::new(topology_invariants)),
        ("determinism", Box::new(determinism)),
        ("evaluation freeze", Box::new(evaluation_freeze)),
        (
            "desk-scale collapse trend",
            Box::new(|| collapse_trend(desk())),
        ),
        ("q-gap contraction trend", Box::new(|| q_gap_trend(desk()))),
        ("silhouette and k-means oracle", Box::new(silhouette_oracle)),
        ("threshold extraction", Box::new(threshold_extraction)),
        ("grouped-mode isolation", Box::new(grouped_isolation)),
    ];

    let (mut passed, mut failed) = (0, 0);
    for (name, criterion) in &criteria {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        match criterion() {
            Ok(detail) => {
                passed += 1;
                println!("PASS {name}: {detail}");
            }
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {passed} passed, {failed} failed in {:.1}s",
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
