use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use harmload::sweep::run_sweeps;
use harmload_core::circuits::*;
use harmload_core::datagen::{case_to_loads, measure, Dataset, MeasurementPoint, SweepConfig};
use harmload_core::fcm::{evaluate, fit, model_order_sweep, predict, select_voltage_orders, FcmModel, Split};
use harmload_core::harmonics::{dft_harmonics, esprit_harmonics};
use harmload_core::signal::{parasitic_power_ratio, synthesize, thd, HarmonicSpectrum, SampledWaveform, Unit};
use harmload_core::Complex64;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type CMatrix = DMatrix<Complex64>;

const SWEEP_CASES: [u8; 3] = [1, 9, 13];
const MAX_NPRIME: usize = 14;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn crand(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
}

fn spectrum(unit: Unit, phasors: Vec<Complex64>) -> HarmonicSpectrum {
    HarmonicSpectrum::new(60.0, unit, phasors).unwrap()
}

fn point(alpha: f64, v: Vec<Complex64>, i: Vec<Complex64>) -> MeasurementPoint {
    MeasurementPoint {
        case_id: 1,
        alpha_imp: alpha,
        v: spectrum(Unit::Volt, v),
        i: spectrum(Unit::Ampere, i),
        provenance: Default::default(),
        meta: Default::default(),
    }
}

fn rel_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let norm: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (diff / norm).sqrt()
}

fn device_thd() -> Outcome {
    let cfg = SweepConfig::default();
    let bands: [(&str, u8, f64, f64); 4] = [
        ("desktop", 13, 0.26, 0.46),
        ("laptop", 14, 0.45, 0.75),
        ("vfd", 9, 0.0, 0.25),
        ("pv", 1, 0.0, 0.07),
    ];
    let mut detail = Vec::new();
    for (name, case, lo, hi) in bands {
        let start = Instant::now();
        let (p, _) = measure(case, 1.0, &cfg).map_err(|e| format!("{name}: {e}"))?;
        let elapsed = start.elapsed();
        let t = thd(&p.i).map_err(|e| format!("{name}: {e}"))?;
        ensure((lo..=hi).contains(&t), || format!("{name} THD {t:.4} outside [{lo}, {hi}]"))?;
        ensure(elapsed <= Duration::from_secs(60), || format!("{name} took {elapsed:?}"))?;
        detail.push(format!("{name} {t:.3} ({:.1}s)", elapsed.as_secs_f64()));
    }
    Ok(detail.join(", "))
}

fn monotone_violations(values: &[f64], increasing: bool) -> Vec<f64> {
    values
        .windows(2)
        .map(|w| if increasing { w[0] - w[1] } else { w[1] - w[0] })
        .filter(|&d| d > 0.0)
        .collect()
}

fn attenuation(ds: &Dataset, elapsed: Duration) -> Outcome {
    ensure(elapsed <= Duration::from_secs(1800), || format!("sweep took {elapsed:?}"))?;
    let mut detail = Vec::new();
    for case in SWEEP_CASES {
        let pts = ds.case(case);
        ensure(pts.len() == 19, || format!("case {case}: {} points", pts.len()))?;
        let v: Vec<f64> = pts.iter().map(|p| thd(&p.v).unwrap()).collect();
        let i: Vec<f64> = pts.iter().map(|p| thd(&p.i).unwrap()).collect();
        ensure(v[0] < v[18], || format!("case {case}: voltage THD {} -> {}", v[0], v[18]))?;
        ensure(i[0] > i[18], || format!("case {case}: current THD {} -> {}", i[0], i[18]))?;
        let mut bad = monotone_violations(&v, true);
        bad.extend(monotone_violations(&i, false));
        ensure(bad.len() <= 1 && bad.iter().all(|&d| d <= 0.005), || {
            format!("case {case}: monotonicity violations {bad:?}")
        })?;
        detail.push(format!(
            "case {case} v {:.4}->{:.4} i {:.4}->{:.4}",
            v[0], v[18], i[0], i[18]
        ));
    }
    detail.push(format!("{:.0}s", elapsed.as_secs_f64()));
    Ok(detail.join(", "))
}

struct Truth {
    i0: Vec<Complex64>,
    y: CMatrix,
}

impl Truth {
    fn random(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Self {
        Self {
            i0: (0..m).map(|_| crand(rng, 1.0)).collect(),
            y: DMatrix::from_fn(m, n, |_, _| crand(rng, 0.1)),
        }
    }

    fn current(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.i0.len())
            .map(|r| self.i0[r] + (0..v.len()).map(|c| self.y[(r, c)] * v[c]).sum::<Complex64>())
            .collect()
    }

    fn samples(&self, rng: &mut ChaCha8Rng, k: usize, noise: f64) -> Vec<MeasurementPoint> {
        (0..k)
            .map(|j| {
                let v: Vec<Complex64> = (0..self.y.ncols()).map(|_| crand(rng, 1.0)).collect();
                let mut i = self.current(&v);
                for x in &mut i {
                    *x += crand(rng, noise * x.norm());
                }
                point(1.0 + j as f64, v, i)
            })
            .collect()
    }

    fn parameter_error(&self, model: &FcmModel) -> f64 {
        let mut diff = 0.0;
        let mut norm = 0.0;
        for r in 0..self.i0.len() {
            diff += (model.i0[r] - self.i0[r]).norm_sqr();
            norm += self.i0[r].norm_sqr();
            for c in 0..self.y.ncols() {
                diff += (model.admittance(r, c) - self.y[(r, c)]).norm_sqr();
                norm += self.y[(r, c)].norm_sqr();
            }
        }
        (diff / norm).sqrt()
    }
}

fn recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_exact, mut worst_noisy) = (0.0f64, 0.0f64);
    for n in 1..=6 {
        let orders: Vec<usize> = (1..=n).collect();
        for _ in 0..20 {
            let truth = Truth::random(&mut rng, 7, n);
            let k = 2 * (n + 1);
            let exact = truth.samples(&mut rng, k, 0.0);
            let model = fit(&exact, &orders).map_err(|e| e.to_string())?;
            worst_exact = worst_exact.max(truth.parameter_error(&model));
            for p in &exact {
                let back = predict(&model, &p.v).map_err(|e| e.to_string())?;
                worst_exact = worst_exact.max(rel_diff(back.phasors(), p.i.phasors()));
            }
            let noisy = truth.samples(&mut rng, k, 1e-3);
            let model = fit(&noisy, &orders).map_err(|e| e.to_string())?;
            worst_noisy = worst_noisy.max(truth.parameter_error(&model));
        }
    }
    ensure(worst_exact < 1e-8, || format!("exact recovery error {worst_exact:e}"))?;
    ensure(worst_noisy < 5e-3, || format!("perturbed recovery error {worst_noisy:e}"))?;
    Ok(format!("exact {worst_exact:.1e}, perturbed {worst_noisy:.1e}"))
}

fn normal_equations(points: &[MeasurementPoint], orders: &[usize]) -> Option<CMatrix> {
    let z = DMatrix::from_fn(orders.len() + 1, points.len(), |r, c| {
        if r == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            points[c].v.order(orders[r - 1])
        }
    });
    let i = DMatrix::from_fn(points[0].i.len(), points.len(), |r, c| points[c].i.order(r + 1));
    let zh = z.adjoint();
    let rhs = (&i * &zh).adjoint();
    Some((&z * &zh).lu().solve(&rhs)?.adjoint())
}

fn least_squares_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let n = 1 + trial % 6;
        let m = 1 + trial % 5;
        let k = n + 2 + trial % 7;
        let truth = Truth::random(&mut rng, m, n);
        let pts = truth.samples(&mut rng, k, 0.1);
        let orders: Vec<usize> = (1..=n).collect();
        let model = fit(&pts, &orders).map_err(|e| e.to_string())?;
        ensure(!model.training.rank_deficient, || format!("trial {trial}: rank deficient"))?;
        let theta = normal_equations(&pts, &orders).ok_or_else(|| format!("trial {trial}: singular Gram"))?;
        let mut ours = Vec::new();
        let mut reference = Vec::new();
        for r in 0..m {
            ours.push(model.i0[r]);
            reference.push(theta[(r, 0)]);
            for c in 0..n {
                ours.push(model.admittance(r, c));
                reference.push(theta[(r, c + 1)]);
            }
        }
        worst = worst.max(rel_diff(&ours, &reference));
    }
    ensure(worst < 1e-8, || format!("max relative difference {worst:e}"))?;
    Ok(format!("100 instances, max relative difference {worst:.1e}"))
}

fn three_active(seed: u64) -> Vec<MeasurementPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (10, 25);
    let mut truth = Truth::random(&mut rng, m, n);
    for r in 0..m {
        for c in 0..n {
            if ![0, 2, 4].contains(&c) {
                truth.y[(r, c)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    (0..19)
        .map(|j| {
            let v: Vec<Complex64> = (1..=n)
                .map(|h| match h {
                    1 => Complex64::new(120.0 + rng.random_range(-3.0..3.0), 0.0),
                    3 => crand(&mut rng, 6.0),
                    5 => crand(&mut rng, 4.0),
                    _ => crand(&mut rng, 1.0 / h as f64),
                })
                .collect();
            let mut i = truth.current(&v);
            let scale = i.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt() / (m as f64).sqrt();
            for x in &mut i {
                *x += crand(&mut rng, 1e-3 * scale);
            }
            point(1.0 + 0.5 * j as f64, v, i)
        })
        .collect()
}

struct Identified {
    case: u8,
    best: usize,
    largest: usize,
    median: f64,
    p95: f64,
}

fn identify(pts: &[MeasurementPoint], case: u8) -> Result<Identified, String> {
    let split = Split::interleaved(pts.len(), 4).map_err(|e| e.to_string())?;
    let curve = model_order_sweep(pts, &split, 1..=MAX_NPRIME).map_err(|e| format!("case {case}: {e}"))?;
    let best = curve.best().ok_or_else(|| format!("case {case}: empty curve"))?;
    let largest = curve.points.iter().map(|p| p.n_prime).max().unwrap_or(0);
    let (train, test) = split.apply(pts).map_err(|e| e.to_string())?;
    let model = fit(&train, &best.orders).map_err(|e| format!("case {case}: {e}"))?;
    let report = evaluate(&model, &test).map_err(|e| format!("case {case}: {e}"))?;
    Ok(Identified {
        case,
        best: best.n_prime,
        largest,
        median: report.summary.median,
        p95: report.summary.p95,
    })
}

fn reconstruction(ids: &[Identified]) -> Outcome {
    let mut detail = Vec::new();
    for id in ids {
        ensure(id.median < 0.02 && id.p95 < 0.05, || {
            format!("case {}: median {:.4} p95 {:.4}", id.case, id.median, id.p95)
        })?;
        detail.push(format!("case {} n'={} median {:.4} p95 {:.4}", id.case, id.best, id.median, id.p95));
    }
    Ok(detail.join(", "))
}

fn overfitting(ids: &[Identified]) -> Outcome {
    let mut detail = Vec::new();
    for id in ids {
        ensure(id.best < MAX_NPRIME && id.best < id.largest, || {
            format!("case {}: minimum at n'={} of {}", id.case, id.best, id.largest)
        })?;
        detail.push(format!("case {} min at {} of {}", id.case, id.best, id.largest));
    }
    for seed in 0..20 {
        let pts = three_active(seed);
        let orders = select_voltage_orders(&pts, 3).map_err(|e| e.to_string())?;
        ensure(orders == [1, 3, 5], || format!("seed {seed}: selected {orders:?}"))?;
        let split = Split::interleaved(pts.len(), 4).map_err(|e| e.to_string())?;
        let curve = model_order_sweep(&pts, &split, 1..=10).map_err(|e| e.to_string())?;
        let best = curve.best().map(|p| p.n_prime);
        ensure(best == Some(3), || format!("synthetic seed {seed}: minimum at {best:?}"))?;
    }
    detail.push("synthetic min at 3 (20 seeds)".into());
    Ok(detail.join(", "))
}

fn parasitic(ds: Option<&Dataset>) -> Outcome {
    let cfg = SweepConfig::default();
    let mut detail = Vec::new();
    let mut check = |case: u8, p: &MeasurementPoint| -> Result<(), String> {
        ensure(case_to_loads(case).unwrap().has_rectifier(), || format!("case {case} has no rectifier"))?;
        let r = parasitic_power_ratio(&p.v, &p.i).map_err(|e| e.to_string())?;
        ensure(r.abs() > 0.0 && r.abs() <= 0.05, || {
            format!("case {case} alpha {}: ratio {r:.5}", p.alpha_imp)
        })?;
        detail.push(format!("{case}@{} {r:.4}", p.alpha_imp));
        Ok(())
    };
    for case in [9u8, 13] {
        let pts = match ds {
            Some(ds) => ds.case(case),
            None => vec![
                measure(case, 1.0, &cfg).map_err(|e| e.to_string())?.0,
                measure(case, 10.0, &cfg).map_err(|e| e.to_string())?.0,
            ],
        };
        let first = pts.first().ok_or("empty case")?;
        let last = pts.last().ok_or("empty case")?;
        check(case, first)?;
        check(case, last)?;
    }
    for case in [8u8, 15] {
        for alpha in [1.0, 10.0] {
            let (p, _) = measure(case, alpha, &cfg).map_err(|e| e.to_string())?;
            check(case, &p)?;
        }
    }
    Ok(detail.join(", "))
}

fn run_steps(n: &Netlist, dt: f64, steps: usize, mut f: impl FnMut(&Simulator, &CircuitState)) -> Result<(), String> {
    let mut sim = Simulator::new(n, dt).map_err(|e| e.to_string())?;
    let mut s = sim.initial_state();
    for _ in 0..steps {
        sim.advance(&mut s).map_err(|e| e.to_string())?;
        f(&sim, &s);
    }
    Ok(())
}

fn rl_step() -> Result<f64, String> {
    let (r, l) = (1.0, 1e-3);
    let tau = l / r;
    let mut n = Netlist::new();
    let (a, b) = (n.node("a"), n.node("b"));
    n.source("V", a, GROUND, SourceWaveform::Dc(1.0));
    n.resistor("R", a, b, r);
    let ind = n.inductor("L", b, GROUND, l);
    let mut worst = 0.0f64;
    run_steps(&n, tau / 100.0, 500, |sim, s| {
        let exact = 1.0 - (-s.time / tau).exp();
        worst = worst.max((sim.element_current(s, ind) - exact).abs());
    })?;
    ensure(worst < 1e-4, || format!("RL step error {worst:e}"))?;
    Ok(worst)
}

enum Part {
    R(f64),
    L(f64),
    C(f64),
}

fn random_rlc(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let rs = rng.random_range(0.5..5.0);
    let ls = rng.random_range(0.5e-3..5e-3);
    let phase = rng.random_range(-3.0..3.0);
    let parts: Vec<Part> = (0..3)
        .map(|_| match rng.random_range(0..3) {
            0 => Part::R(rng.random_range(1.0..100.0)),
            1 => Part::L(rng.random_range(1e-3..20e-3)),
            _ => Part::C(rng.random_range(10e-6..200e-6)),
        })
        .collect();
    let shunts = [rng.random_range(5.0..50.0), rng.random_range(5.0..50.0)];

    let mut n = Netlist::new();
    let (s, a, b, c) = (n.node("s"), n.node("a"), n.node("n1"), n.node("n2"));
    n.source("V", s, GROUND, SourceWaveform::Sine { rms: 100.0, frequency: 60.0, phase });
    n.resistor("Rs", s, a, rs);
    n.inductor("Ls", a, b, ls);
    for (k, (p, &(x, y))) in parts.iter().zip(&[(b, GROUND), (b, c), (c, GROUND)]).enumerate() {
        let name = format!("P{k}");
        match *p {
            Part::R(r) => n.resistor(&name, x, y, r),
            Part::L(l) => n.inductor(&name, x, y, l),
            Part::C(cap) => n.capacitor(&name, x, y, cap, 0.0),
        };
    }
    n.resistor("Rd1", b, GROUND, shunts[0]);
    n.resistor("Rd2", c, GROUND, shunts[1]);
    let mut cfg = SimulationConfig::new(vec![
        ChannelSpec::voltage("v1", b, GROUND),
        ChannelSpec::voltage("v2", c, GROUND),
    ]);
    cfg.steady_state.rel_tol = 1e-7;
    let w = simulate(&n, &cfg).map_err(|e| e.to_string())?;

    let jw = Complex64::new(0.0, TAU * 60.0);
    let admittance = |p: &Part| match *p {
        Part::R(r) => Complex64::new(1.0 / r, 0.0),
        Part::L(l) => 1.0 / (jw * l),
        Part::C(cap) => jw * cap,
    };
    let ys = 1.0 / (Complex64::new(rs, 0.0) + jw * ls);
    let (y0, y1, y2) = (admittance(&parts[0]), admittance(&parts[1]), admittance(&parts[2]));
    let m = DMatrix::from_row_slice(2, 2, &[ys + y0 + y1 + 1.0 / shunts[0], -y1, -y1, y1 + y2 + 1.0 / shunts[1]]);
    let e = Complex64::from_polar(100.0, phase);
    let v = m
        .lu()
        .solve(&DVector::from_vec(vec![e * ys, Complex64::new(0.0, 0.0)]))
        .ok_or("singular nodal matrix")?;
    let mut worst = 0.0f64;
    for k in 0..2 {
        let got = dft_harmonics(w.channel_at(k).unwrap(), 1).map_err(|e| e.to_string())?.order(1);
        worst = worst.max((got - v[k]).norm() / v[k].norm().max(1e-3 * e.norm()));
    }
    Ok(worst)
}

fn lc_drift() -> Result<f64, String> {
    let (l, c) = (1e-3, 1e-3);
    let mut n = Netlist::new();
    let a = n.node("a");
    n.capacitor("C", a, GROUND, c, 1.0);
    let ind = n.inductor("L", a, GROUND, l);
    let period = TAU * (l * c).sqrt();
    let e0 = 0.5 * c;
    let mut worst = 0.0f64;
    run_steps(&n, period / 100.0, 100_000, |sim, s| {
        let v = sim.probe(s, &Probe::Voltage { pos: a, neg: GROUND });
        let i = sim.element_current(s, ind);
        worst = worst.max(((0.5 * c * v * v + 0.5 * l * i * i) - e0).abs() / e0);
    })?;
    Ok(worst)
}

fn supply_power(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let legs: Vec<Vec<Complex64>> = (0..4)
            .map(|k| {
                let scale = if k < 2 { 120.0 } else { 10.0 };
                (0..25).map(|h| crand(rng, scale / (h + 1) as f64)).collect()
            })
            .collect();
        let v1 = spectrum(Unit::Volt, legs[0].clone());
        let v2 = spectrum(Unit::Volt, legs[1].clone());
        let i1 = spectrum(Unit::Ampere, legs[2].clone());
        let i2 = spectrum(Unit::Ampere, legs[3].clone());
        let (v, i) = equivalent_supply(&v1, &v2, &i1, &i2).map_err(|e| e.to_string())?;
        for h in 1..=25 {
            let want = v1.order(h) * i1.order(h).conj() + v2.order(h) * i2.order(h).conj();
            let got = v.order(h) * i.order(h).conj();
            worst = worst.max((got - want).norm() / want.norm());
        }
    }
    Ok(worst)
}

fn solver_oracles() -> Outcome {
    let rl = rl_step()?;
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut rlc = 0.0f64;
    for _ in 0..12 {
        rlc = rlc.max(random_rlc(&mut rng)?);
    }
    ensure(rlc < 1e-3, || format!("RLC phasor error {rlc:e}"))?;
    let lc = lc_drift()?;
    ensure(lc < 1e-3, || format!("LC energy drift {lc:e}"))?;
    let power = supply_power(&mut rng)?;
    ensure(power < 1e-9, || format!("equivalent supply power error {power:e}"))?;
    Ok(format!("RL {rl:.1e}, RLC {rlc:.1e}, LC drift {lc:.1e}, supply power {power:.1e}"))
}

fn random_signal(rng: &mut ChaCha8Rng, orders: usize) -> HarmonicSpectrum {
    let phasors = (1..=orders)
        .map(|h| {
            let amp = if h == 1 { 100.0 } else { rng.random_range(0.1..20.0) };
            Complex64::from_polar(amp, rng.random_range(-3.1..3.1))
        })
        .collect();
    spectrum(Unit::Volt, phasors)
}

fn extraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (mut esprit_err, mut round_trip) = (0.0f64, 0.0f64);
    for trial in 0..48 {
        let orders = 1 + trial % 12;
        let s = random_signal(&mut rng, orders);
        let w: SampledWaveform = synthesize(&s, 4.0 / 60.0, 60.0 * 64.0).map_err(|e| e.to_string())?;
        let view = w.channel_at(0).unwrap();
        let dft = dft_harmonics(view, orders).map_err(|e| e.to_string())?;
        round_trip = round_trip.max(rel_diff(dft.phasors(), s.phasors()));
        let esprit = esprit_harmonics(view, orders, 1).map_err(|e| e.to_string())?.spectrum;
        esprit_err = esprit_err.max(rel_diff(esprit.phasors(), dft.phasors()));
    }
    ensure(esprit_err < 1e-4, || format!("ESPRIT vs DFT {esprit_err:e}"))?;
    ensure(round_trip < 1e-9, || format!("round trip {round_trip:e}"))?;
    Ok(format!("ESPRIT vs DFT {esprit_err:.1e}, round trip {round_trip:.1e}"))
}

fn run_sweep_cli(dir: &Path) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_harmload"))
        .current_dir(dir)
        .args(["sweep", "--case", "13,9", "--points", "3", "--out", "ds.jsonl", "--fig8", "fig8.csv"])
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("sweep exited with {status}"))?;
    let mut bytes = std::fs::read(dir.join("ds.jsonl")).map_err(|e| e.to_string())?;
    bytes.extend(std::fs::read(dir.join("fig8.csv")).map_err(|e| e.to_string())?);
    Ok(bytes)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = run_sweep_cli(a.path())?;
    let second = run_sweep_cli(b.path())?;
    ensure(first == second, || "sweep outputs differ".into())?;
    Ok(format!("{} bytes identical", first.len()))
}

fn report(id: usize, outcome: Outcome) -> bool {
    match &outcome {
        Ok(detail) => println!("criterion {id}: PASS {detail}"),
        Err(detail) => println!("criterion {id}: FAIL {detail}"),
    }
    outcome.is_ok()
}

fn main() {
    let mut results = Vec::new();
    results.push(report(1, device_thd()));

    let start = Instant::now();
    let sweep = run_sweeps(&SWEEP_CASES, &SweepConfig::default(), 0, None);
    let elapsed = start.elapsed();
    let ds = sweep.as_ref().ok();
    results.push(report(
        2,
        match &sweep {
            Ok(ds) => attenuation(ds, elapsed),
            Err(e) => Err(e.to_string()),
        },
    ));
    results.push(report(3, recovery()));
    results.push(report(4, least_squares_oracle()));

    let ids: Result<Vec<Identified>, String> = match ds {
        Some(ds) => SWEEP_CASES.iter().map(|&c| identify(&ds.case(c), c)).collect(),
        None => Err("sweep failed".into()),
    };
    results.push(report(5, ids.as_deref().map_err(Clone::clone).and_then(reconstruction)));
    results.push(report(6, ids.as_deref().map_err(Clone::clone).and_then(overfitting)));
    results.push(report(7, parasitic(ds)));
    results.push(report(8, solver_oracles()));
    results.push(report(9, extraction()));
    results.push(report(10, determinism()));

    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
