//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use paritysim::calibration::{
    fit_readout, load_config, log_likelihood, simulate_repeated_readout, FitOptions, NoiseParams, Prepared,
    ReadoutRecords, Trial,
};
use paritysim::experiments::{
    classical_contexts, classical_c, nchv_bound, parity_preservation, run_ghz_generation, run_nci, run_nci_on,
    run_single_shot_ghz, run_single_shot_on, run_zeno_study, EngineConfig,
};
use paritysim::instrument::{ReadoutFactors, ReadoutModel};
use paritysim::pauli::observables::{p1, p2, p3, p4, parities, x, y};
use paritysim::pauli::PauliString;
use paritysim::qmat::{maximally_mixed, random_density, ComplexMatrix, C64};
use paritysim::sequencer::{compile, count_branches, Executor, Mode, PhaseTracker, Schedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<T>(r: paritysim::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn ideal_ghz() -> Check {
    let r = e(run_ghz_generation(&NoiseParams::ideal(), Mode::Branched, &EngineConfig::exact()))?;
    ensure(r.branches.len() == 8, "expected 8 branches")?;
    let mut worst: f64 = 0.0;
    for b in &r.branches {
        worst = worst.max((b.probability - 0.125).abs()).max((b.fidelity - 1.0).abs());
    }
    ensure(worst < 1e-9, format!("max deviation {worst:.2e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

fn ideal_single_shot() -> Check {
    // Operator identity by explicit 8x8 products.
    let m = |p: PauliString| p.to_matrix();
    let prod = e(e(e(m(p1()).matmul(&m(p2())))?.matmul(&m(p3())))?.matmul(&m(p4())))?;
    let minus_i = ComplexMatrix::identity(8).scale(C64::new(-1.0, 0.0));
    ensure(prod.max_abs_diff(&minus_i) < 1e-15, "p1 p2 p3 p4 != -I")?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut states = vec![e(maximally_mixed(3))?];
    for k in 0..10 {
        states.push(e(random_density(3, 1 + k % 3, &mut rng))?);
    }
    for mode in [Mode::Branched, Mode::Echoed] {
        for rho in &states {
            let r = e(run_single_shot_on(&NoiseParams::ideal(), mode, &EngineConfig::exact(), rho))?;
            ensure(r.outcomes.len() == 16, "expected 16 outcome strings")?;
            for o in &r.outcomes {
                let sign: i32 = o.label.chars().map(|c| if c == '+' { 1 } else { -1 }).product();
                ensure(sign == -1 || o.value < 1e-12, format!("{mode}: {} has probability {}", o.label, o.value))?;
            }
            ensure((r.product + 1.0).abs() < 1e-12, format!("{mode}: product {}", r.product))?;
        }
    }
    Ok(format!("{} states, both modes, product -1", states.len()))
}

fn nchv_oracle() -> Check {
    let mut best = i32::MIN;
    for bits in 0..1u32 << 10 {
        let v: [i8; 10] = std::array::from_fn(|k| if bits >> k & 1 == 0 { 1 } else { -1 });
        let c = classical_contexts(&v);
        ensure(c[0] * c[1] * c[2] * c[3] == c[4], format!("identity fails at {bits:#b}"))?;
        best = best.max(classical_c(&v));
    }
    let r = nchv_bound();
    ensure(best == 3 && r.bound == 3 && classical_c(&r.assignment) == 3, format!("bound {best}/{}", r.bound))?;
    Ok("bound 3 over 1024 assignments".into())
}

fn ideal_nci() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let rho = e(random_density(3, 1 + k % 8, &mut rng))?;
        let r = e(run_nci_on(&NoiseParams::ideal(), &EngineConfig::exact(), &rho))?;
        worst = worst.max((r.c_value - 5.0).abs());
    }
    ensure(worst < 1e-9, format!("max |C - 5| = {worst:.2e}"))?;
    Ok(format!("20 random states, max |C - 5| = {worst:.1e}"))
}

fn in_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<(), String> {
    ensure(v >= lo && v <= hi, format!("{name} = {v:.4} outside [{lo}, {hi}]"))
}

fn tuned_brackets() -> Check {
    let p = e(load_config(&configs().join("tuned.toml")))?;
    let q0 = p.readout.same_state_preservation(0);
    let q1 = p.readout.same_state_preservation(1);
    ensure((q0 - 0.943).abs() <= 0.005 && (q1 - 0.991).abs() <= 0.005, format!("q = {q0}, {q1}"))?;
    let mut pres = Vec::new();
    for obs in parities() {
        for sign in [1, -1] {
            let v = e(parity_preservation(&p, &obs, sign))?;
            in_range(&format!("preservation {obs} {sign:+}"), v, 0.84, 0.93)?;
            pres.push(v);
        }
    }
    let exact = EngineConfig::exact();
    let mut notes = vec![format!(
        "preservation {:.3}..{:.3}",
        pres.iter().cloned().fold(f64::INFINITY, f64::min),
        pres.iter().cloned().fold(0.0, f64::max)
    )];
    for mode in [Mode::Branched, Mode::Echoed] {
        let g = e(run_ghz_generation(&p, mode, &exact))?;
        in_range("average GHZ fidelity", g.average_fidelity, 0.55, 0.72)?;
        if mode == Mode::Branched {
            ensure(g.best_branch == "+++", format!("best branch {}", g.best_branch))?;
            let top = g.branches.iter().map(|b| b.fidelity).fold(0.0, f64::max);
            ensure(g.branches[0].outcome == "+++" && g.branches[0].fidelity == top, "+++ not maximal")?;
        }
        let s = e(run_single_shot_ghz(&p, mode, &exact))?;
        in_range("single-shot product", s.product, -0.70, -0.45)?;
        notes.push(format!("{mode}: F {:.3}, product {:.3}", g.average_fidelity, s.product));
    }
    let n = e(run_nci(&p, &exact))?;
    in_range("C", n.c_value, 3.0, 3.5)?;
    notes.push(format!("C {:.3}", n.c_value));
    Ok(notes.join("; "))
}

fn within(name: &str, sampled: f64, se: Option<f64>, exact: f64) -> Result<f64, String> {
    let se = se.ok_or(format!("{name}: no standard error"))?;
    let z = (sampled - exact).abs() / se;
    ensure(z <= 5.0, format!("{name}: sampled {sampled:.5} vs exact {exact:.5}, {z:.1} SE"))?;
    Ok(z)
}

fn engine_equivalence() -> Check {
    let p = e(load_config(&configs().join("tuned.toml")))?;
    let exact = EngineConfig::exact();
    let sampled = EngineConfig::sampled(100_000, 20_240_601);
    let mut worst: f64 = 0.0;
    let ge = e(run_ghz_generation(&p, Mode::Branched, &exact))?;
    let gs = e(run_ghz_generation(&p, Mode::Branched, &sampled))?;
    for (a, b) in gs.branches.iter().zip(&ge.branches) {
        worst = worst.max(within(&format!("fidelity {}", a.outcome), a.fidelity, a.fidelity_se, b.fidelity)?);
        worst = worst.max(within(&format!("probability {}", a.outcome), a.probability, a.probability_se, b.probability)?);
    }
    for mode in [Mode::Branched, Mode::Echoed] {
        let se = e(run_single_shot_ghz(&p, mode, &exact))?;
        let ss = e(run_single_shot_ghz(&p, mode, &sampled))?;
        worst = worst.max(within("single-shot product", ss.product, ss.standard_error, se.product)?);
    }
    let ne = e(run_nci(&p, &exact))?;
    let ns = e(run_nci(&p, &sampled))?;
    for (a, b) in ns.contexts.iter().zip(&ne.contexts) {
        worst = worst.max(within(&a.id, a.mean, a.standard_error, b.mean)?);
    }
    Ok(format!("worst deviation {worst:.2} SE"))
}

fn sequencer_claims() -> Check {
    let ideal = NoiseParams::ideal();
    let tracker = PhaseTracker::from_noise(&ideal);
    for m in 1..=8 {
        let steps: Vec<PauliString> = (0..m).map(|i| parities()[i % 4].clone()).collect();
        let b = e(compile(&e(Schedule::new(steps.clone(), Mode::Branched))?, &tracker))?;
        let s = e(compile(&e(Schedule::new(steps, Mode::Echoed))?, &tracker))?;
        ensure(count_branches(&b) == (1 << m, m), format!("branched m={m}: {:?}", count_branches(&b)))?;
        ensure(count_branches(&s) == (1, m), format!("echoed m={m}: {:?}", count_branches(&s)))?;
    }
    let pool: Vec<PauliString> = parities()
        .into_iter()
        .chain((0..3).flat_map(|k| [x(k), y(k)]))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for len in 1..=4 {
        for _ in 0..10 {
            let steps: Vec<PauliString> = (0..len).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect();
            let rho = e(random_density(3, rng.gen_range(1..=8), &mut rng))?;
            let dist = |mode| -> Result<HashMap<Vec<i8>, f64>, String> {
                let seq = e(compile(&e(Schedule::new(steps.clone(), mode))?, &tracker))?;
                let recs = e(e(Executor::new(&seq, &ideal))?.exact(&rho))?;
                Ok(recs.into_iter().map(|r| (r.labels, r.probability)).collect())
            };
            let (a, b) = (dist(Mode::Branched)?, dist(Mode::Echoed)?);
            let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).cloned().collect();
            let tv: f64 = keys
                .iter()
                .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
                .sum::<f64>()
                / 2.0;
            worst = worst.max(tv);
            cases += 1;
        }
    }
    ensure(worst <= 1e-9, format!("total variation {worst:.2e}"))?;
    Ok(format!("counts (2^m, m) for m=1..8; {cases} schedules, max TV {worst:.1e}"))
}

fn zeno() -> Check {
    let p = NoiseParams {
        t2star_ms: [9.9, 11.2, 17.3],
        ..NoiseParams::ideal()
    };
    let mut last = 0.0;
    let mut vals = Vec::new();
    for m in [1, 2, 4, 8] {
        let r = e(run_zeno_study(&p, m, 10.0, &EngineConfig::exact()))?;
        ensure(r.fidelity_measured > r.fidelity_unmeasured, format!("m={m}: no improvement"))?;
        ensure(r.fidelity_measured >= last, format!("m={m}: fidelity decreased"))?;
        last = r.fidelity_measured;
        vals.push(format!("{:.3}", r.fidelity_measured));
        if m == 1 {
            vals.insert(0, format!("unmeasured {:.3}, measured", r.fidelity_unmeasured));
        }
    }
    Ok(vals.join(" "))
}

/// Likelihood of one record by summing over all hidden-state paths.
fn path_likelihood(table: &[[[f64; 2]; 2]; 2], init: [f64; 2], r: [u8; 3]) -> f64 {
    let mut total = 0.0;
    for path in 0..16usize {
        let s = [path >> 3 & 1, path >> 2 & 1, path >> 1 & 1, path & 1];
        let mut w = init[s[0]];
        for k in 0..3 {
            w *= table[s[k]][r[k] as usize][s[k + 1]];
        }
        total += w;
    }
    total
}

fn calibration() -> Check {
    let truth = [0.943, 0.991, 0.95, 0.995];
    let p = NoiseParams::default();
    ensure(
        p.readout.factors()
            == Some(ReadoutFactors {
                q0: truth[0],
                q1: truth[1],
                f0: truth[2],
                f1: truth[3],
            }),
        "default factors differ from the calibration truth",
    )?;

    // Forward recursion against path enumeration.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let f = ReadoutFactors {
            q0: rng.gen_range(0.5..1.0),
            q1: rng.gen_range(0.5..1.0),
            f0: rng.gen_range(0.5..1.0),
            f1: rng.gen_range(0.5..1.0),
        };
        let model = e(ReadoutModel::factorized(f, [1.0; 3]))?;
        let init = [rng.gen_range(0.9..1.0), rng.gen_range(0.9..1.0)];
        for prepared in [Prepared::Zero, Prepared::One, Prepared::Mixed] {
            for pat in 0..8u8 {
                let t = Trial {
                    r1: pat >> 2 & 1,
                    r2: pat >> 1 & 1,
                    r3: pat & 1,
                    prepared,
                };
                let recs = e(ReadoutRecords::new(vec![t]))?;
                let fwd = log_likelihood(&recs, &model, init).exp();
                let oracle = path_likelihood(model.table(), prepared.initial(init), t.outcomes());
                worst = worst.max((fwd - oracle).abs());
            }
        }
    }
    ensure(worst <= 1e-12, format!("likelihood mismatch {worst:.2e}"))?;

    let mut hits = 0;
    for run in 0..100u64 {
        let recs = e(simulate_repeated_readout(&p, 200_000, Prepared::Mixed, 1000 + run))?;
        let fit = e(fit_readout(&recs, &p.readout, p.init_fid, &FitOptions { seed: run, ..FitOptions::default() }))?;
        let v = fit.as_array();
        if v.iter().zip(truth).all(|(a, b)| (a - b).abs() <= 0.01) {
            hits += 1;
        }
    }
    ensure(hits >= 95, format!("{hits}/100 fits within 0.01"))?;
    Ok(format!("{hits}/100 fits within 0.01; likelihood agreement {worst:.1e}"))
}

fn cli(args: &[&str], threads: &str) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_paritysim"))
        .args(args)
        .args(["--threads", threads])
        .env_remove("ZP_CONFIG")
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)))?;
    Ok(o.stdout)
}

fn determinism() -> Check {
    let cfg = configs().join("tuned.toml");
    let cfg = cfg.to_str().unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["ghz", "--engine", "sampled", "--trials", "20000", "--seed", "3"],
        vec!["single-shot", "--engine", "sampled", "--trials", "100000", "--seed", "7"],
        vec!["nci", "--engine", "sampled", "--trials", "20000", "--seed", "5"],
        vec!["zeno", "--engine", "sampled", "--trials", "5000", "--seed", "2"],
        vec!["calibrate", "--trials", "20000", "--seed", "4"],
        vec!["ghz", "--mode", "echoed"],
    ];
    let mut count = 0;
    for base in &runs {
        for format in ["json", "csv", "text"] {
            let mut args = base.clone();
            args.extend(["--config", cfg, "--format", format]);
            let a = cli(&args, "1")?;
            let b = cli(&args, "4")?;
            let c = cli(&args, "4")?;
            ensure(a == b && b == c, format!("{args:?} differs between runs"))?;
            count += 1;
        }
    }
    Ok(format!("{count} invocations byte-identical across repeats and 1/4 threads"))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Check, Option<Duration>)> = vec![
        ("1 ideal GHZ generation", ideal_ghz, Some(Duration::from_secs(1))),
        ("2 ideal single-shot contradiction", ideal_single_shot, Some(Duration::from_secs(1))),
        ("3 NCHV enumeration oracle", nchv_oracle, Some(Duration::from_secs(1))),
        ("4 ideal NCI", ideal_nci, None),
        ("5 tuned-config brackets", tuned_brackets, Some(Duration::from_secs(30))),
        ("6 engine equivalence", engine_equivalence, Some(Duration::from_secs(120))),
        ("7 sequencer counts and mode agreement", sequencer_claims, None),
        ("8 Zeno property", zeno, Some(Duration::from_secs(10))),
        ("9 calibration recovery", calibration, Some(Duration::from_secs(120))),
        ("10 CLI determinism", determinism, None),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let t0 = Instant::now();
        let mut result = check();
        let dt = t0.elapsed();
        if let (Ok(_), Some(b)) = (&result, budget) {
            if dt > b {
                result = Err(format!("took {:.2} s, budget {} s", dt.as_secs_f64(), b.as_secs()));
            }
        }
        match result {
            Ok(detail) => println!("PASS  {name} ({:.2} s): {detail}", dt.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({:.2} s): {why}", dt.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
