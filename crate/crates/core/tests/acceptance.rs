//! Acceptance criteria 1-9. Run with `--nocapture` to see one PASS/FAIL line
//! per criterion.

use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shd_lra::config::SweepConfig;
use shd_lra::encoder::{CoefficientMatrix, Encoder, EncoderSettings, Projection};
use shd_lra::experiments::{angular_error, doa_rmse, mean_std, probability_of_detection, run_sweep, CellSummary};
use shd_lra::geometry::ArrayGeometry;
use shd_lra::linalg::{op_counts, svd_left};
use shd_lra::lra::localize_block;
use shd_lra::mdp::{build_dictionary, mdp, mdp_norm, MdpDictionary};
use shd_lra::pipeline::{block_frames, AnalysisSettings, Localizer, Method};
use shd_lra::room::{render_scene, render_spectra, speech_shaped_noise, ImageSource, RenderOrder, RenderSettings, RoomSpec, Scene, ScenePlacement};
use shd_lra::sh::{sh_vector, Convention, Direction, Vec3};
use shd_lra::special::{mode_strength, spherical_bessel_j_seq, spherical_bessel_y_seq, spherical_hankel_h1_derivative, SphereKind};

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_direction(rng: &mut impl Rng) -> Direction {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    Direction::new(z.acos(), phi).unwrap()
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn emit(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

fn report(n: usize, title: &str, o: &Outcome) {
    emit(&format!("{} criterion {n}: {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail));
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let dir = random_direction(&mut rng);
        for order in 0..=4 {
            let want = (4.0 * PI).sqrt() * (order as f64 + 1.0);
            worst = worst.max((mdp(dir, order).norm() - want).abs());
            worst = worst.max((mdp_norm(order) - want).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome { pass: worst < 1e-9 && secs < 1.0, detail: format!("max |norm - sqrt(4pi)(N+1)| = {worst:.2e}, {secs:.2} s") }
}

fn criterion_2(dict: &MdpDictionary) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut exact, mut worst) = (0, 0.0f64);
    for _ in 0..100 {
        let idx = rng.gen_range(0..dict.len());
        let alpha = dict.pattern(idx);
        let s: Vec<Complex64> = (0..97).map(|_| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let a = DMatrix::from_fn(16, 97, |r, c| alpha[r] * s[c]);
        let est = localize_block(&CoefficientMatrix::new(a, 3).unwrap(), dict).unwrap();
        exact += usize::from(est.dict_index == idx);
        worst = worst.max(est.residual);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: exact == 100 && worst < 1e-9 && secs < 10.0,
        detail: format!("{exact}/100 exact, max residual {worst:.2e}, {secs:.2} s"),
    }
}

fn criterion_3(dict: &MdpDictionary) -> Outcome {
    let start = Instant::now();
    let geom = ArrayGeometry::rigid32();
    let (fs, nfft, c, order) = (8000.0, 512usize, 343.0, 3usize);
    let encoder = Encoder::new(
        geom.clone(),
        EncoderSettings { max_eq_gain_db: None, ..Default::default() },
        Projection::Quadrature,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let center = Vec3::new(5.0, 4.0, 3.0);
    let bins: Vec<usize> =
        (1..=nfft / 2).filter(|&b| 2.0 * PI * b as f64 * fs / nfft as f64 / c * geom.radius() <= order as f64).collect();
    let freqs: Vec<f64> = bins.iter().map(|&b| b as f64 * fs / nfft as f64).collect();
    let mut worst_rel: f64 = 0.0;
    for _ in 0..10 {
        let dir = random_direction(&mut rng);
        let d = rng.gen_range(1.0..3.0);
        let image = ImageSource { position: center + dir.unit_vector() * d, gain: 1.0, order: 0 };
        let spectrum = vec![c64(1.0, 0.0); nfft / 2 + 1];
        // order 12 is far past convergence at kR <= 3, so only the encoder errs
        let p = render_spectra(&[image], center, &geom, &spectrum, nfft, fs, c, RenderOrder::Fixed(12)).unwrap();
        let pressures = DMatrix::from_fn(geom.capsule_count(), bins.len(), |q, j| p[(q, bins[j])]);
        let a = encoder.encode_spectra(&pressures, &freqs).unwrap();
        let pattern = mdp(dir, order);
        for (j, &f) in freqs.iter().enumerate() {
            let k = 2.0 * PI * f / c;
            let g = Complex64::from_polar(1.0 / (4.0 * PI * d), -k * d);
            let err: f64 = (0..pattern.coeffs().len())
                .map(|r| (a.entries()[(r, j)] - pattern.coeffs()[r] * g).norm_sqr())
                .sum::<f64>()
                .sqrt();
            worst_rel = worst_rel.max(err / (pattern.norm() * g.norm()));
        }
    }

    let mut worst_deg: f64 = 0.0;
    let loc = Localizer::new(geom.clone(), dict.clone(), AnalysisSettings::default()).unwrap();
    for trial in 0..3 {
        let dir = random_direction(&mut rng);
        let scene = Scene {
            room: RoomSpec::reference(0.0).unwrap(),
            placement: ScenePlacement { array_center: center, sources: vec![center + dir.unit_vector() * 2.0] },
            signals: vec![speech_shaped_noise(12000, fs, 30 + trial)],
            sample_rate: fs,
        };
        let sig = render_scene(&scene, &geom, RenderSettings::default()).unwrap();
        for r in loc.localize_signal(&sig, &[Method::ShdLra]).unwrap() {
            worst_deg = worst_deg.max(angular_error(r.estimate.direction, dir));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: worst_rel < 0.01 && worst_deg <= 3.6 && secs < 30.0,
        detail: format!(
            "max relative error {:.3}% over {} bins with kR <= N, max noiseless error {worst_deg:.2} deg, {secs:.1} s",
            100.0 * worst_rel,
            bins.len()
        ),
    }
}

fn cell<'a>(cells: &'a [CellSummary], method: Method, t60: f64, snr: f64) -> &'a CellSummary {
    cells.iter().find(|c| c.method == method && c.t60_s == t60 && c.snr_db == snr).expect("cell present")
}

fn criterion_4(cells: &[CellSummary], secs: f64) -> Outcome {
    let c = cell(cells, Method::ShdLra, 0.0, 40.0);
    let rmse = c.rmse_mean_deg.unwrap_or(f64::INFINITY);
    Outcome {
        pass: c.pd_mean >= 0.95 && rmse <= 4.0 && secs < 300.0,
        detail: format!("PD {:.3}, RMSE {rmse:.2} deg over {} runs / {} blocks, sweep {secs:.0} s", c.pd_mean, c.runs, c.blocks),
    }
}

fn criterion_5(cells: &[CellSummary]) -> Outcome {
    let pds: Vec<&CellSummary> = [0.0, 0.5, 1.0].iter().map(|&t| cell(cells, Method::ShdLra, t, 5.0)).collect();
    let mut inversions = 0;
    let mut within_std = true;
    for w in pds.windows(2) {
        if w[1].pd_mean > w[0].pd_mean {
            inversions += 1;
            within_std &= w[1].pd_mean - w[0].pd_mean <= w[0].pd_std.max(w[1].pd_std);
        }
    }
    Outcome {
        pass: inversions <= 1 && within_std,
        detail: format!(
            "PD at 5 dB for T60 0/0.5/1 s: {:.3} / {:.3} / {:.3} (std {:.3} / {:.3} / {:.3}), {inversions} inversion(s)",
            pds[0].pd_mean, pds[1].pd_mean, pds[2].pd_mean, pds[0].pd_std, pds[1].pd_std, pds[2].pd_std
        ),
    }
}

/// Soft: a shortfall within one std is reported but does not fail.
fn criterion_6(cells: &[CellSummary]) -> (Outcome, bool) {
    let lra = cell(cells, Method::ShdLra, 0.5, 5.0);
    let music = cell(cells, Method::ShdMusic, 0.5, 5.0);
    let strict = lra.pd_mean >= music.pd_mean;
    let soft = strict || music.pd_mean - lra.pd_mean <= lra.pd_std.max(music.pd_std);
    let o = Outcome {
        pass: strict,
        detail: format!(
            "T60 0.5 s, 5 dB: SHD-LRA PD {:.3} +- {:.3}, SHD-MUSIC PD {:.3} +- {:.3}",
            lra.pd_mean, lra.pd_std, music.pd_mean, music.pd_std
        ),
    };
    (o, soft)
}

fn criterion_7(dict: &MdpDictionary) -> Outcome {
    let geom = ArrayGeometry::rigid32();
    let center = Vec3::new(4.0, 4.0, 2.0);
    let dir = Direction::from_degrees(70.0, 30.0).unwrap();
    let scene = Scene {
        room: RoomSpec::reference(0.5).unwrap(),
        placement: ScenePlacement { array_center: center, sources: vec![center + dir.unit_vector() * 2.0] },
        signals: vec![speech_shaped_noise(16000, 8000.0, 7)],
        sample_rate: 8000.0,
    };
    let sig = render_scene(&scene, &geom, RenderSettings::default()).unwrap();
    let loc = Localizer::new(geom, dict.clone(), AnalysisSettings::default()).unwrap();
    let band = loc.band(&sig).unwrap();
    let blocks = block_frames(&band, 0.3).unwrap();
    let shapes_ok = blocks.iter().all(|(b, frames)| {
        let a = loc.encoder().encode_block(&band, frames.clone(), *b).unwrap();
        a.entries().shape() == (16, 97 * frames.len())
    });

    let before = op_counts();
    let lra = loc.localize_signal(&sig, &[Method::ShdLra]).unwrap();
    let mid = op_counts();
    let music = loc.localize_signal(&sig, &[Method::ShdMusic]).unwrap();
    let after = op_counts();
    let n = blocks.len() as u64;
    let (lra_svd, lra_eig) = (mid.svd - before.svd, mid.eig - before.eig);
    let (mus_svd, mus_eig) = (after.svd - mid.svd, after.eig - mid.eig);
    Outcome {
        pass: shapes_ok
            && lra.len() as u64 == n
            && music.len() as u64 == n
            && (lra_svd, lra_eig) == (n, 0)
            && (mus_svd, mus_eig) == (0, n),
        detail: format!(
            "{n} blocks of 16 x 97*frames: SHD-LRA {lra_svd} SVD / {lra_eig} eig, SHD-MUSIC {mus_svd} SVD / {mus_eig} eig"
        ),
    }
}

fn criterion_8(dict: &MdpDictionary) -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;

    // SH orthonormality by midpoint integration over the sphere
    let (nt, np) = (240, 480);
    let c = 25;
    let mut gram = DMatrix::<Complex64>::zeros(c, c);
    for i in 0..nt {
        let theta = (i as f64 + 0.5) * PI / nt as f64;
        let w = theta.sin() * (PI / nt as f64) * (2.0 * PI / np as f64);
        for j in 0..np {
            let y = sh_vector(Direction::new(theta, j as f64 * 2.0 * PI / np as f64).unwrap(), 4, Convention::default());
            for p in 0..c {
                for q in 0..c {
                    gram[(p, q)] += y[p] * y[q].conj() * w;
                }
            }
        }
    }
    let ortho = (gram - DMatrix::identity(c, c)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    pass &= ortho < 1e-3;
    notes.push(format!("orthonormality {ortho:.1e}"));

    // Wronskian j_n y_n' - j_n' y_n = 1/x^2 and the rigid mode strength i/(x^2 h_n')
    let mut wr: f64 = 0.0;
    for &x in &[0.05, 0.3, 1.0, 2.2, 5.0, 12.0] {
        let j = spherical_bessel_j_seq(9, x);
        let y = spherical_bessel_y_seq(9, x).unwrap();
        for n in 1..=8 {
            let dj = j[n - 1] - (n as f64 + 1.0) / x * j[n];
            let dy = y[n - 1] - (n as f64 + 1.0) / x * y[n];
            let w = (j[n] * dy - dj * y[n]) * x * x;
            wr = wr.max((w - 1.0).abs());
            let b = mode_strength(n, x, SphereKind::Rigid).unwrap();
            let want = Complex64::i() / (x * x * spherical_hankel_h1_derivative(n, x).unwrap());
            wr = wr.max((b - want).norm() / want.norm());
        }
    }
    pass &= wr < 1e-8;
    notes.push(format!("Wronskian {wr:.1e}"));

    // Eckart-Young: the rank-1 residual equals the discarded singular energy
    // and no perturbed rank-1 matrix does better
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ey: f64 = 0.0;
    let mut beaten = false;
    for _ in 0..20 {
        let a = random_matrix(&mut rng, 16, 97);
        let svd = svd_left(&a).unwrap();
        let u1 = svd.u.column(0).into_owned();
        let best = &u1 * (u1.adjoint() * &a);
        let resid = (&a - &best).norm().powi(2);
        let tail: f64 = svd.singular_values[1..].iter().map(|s| s * s).sum();
        ey = ey.max((resid - tail).abs() / a.norm().powi(2));
        for _ in 0..5 {
            let du = random_matrix(&mut rng, 16, 1) * c64(1e-3, 0.0);
            let u = (&u1 + du).normalize();
            let other = &u * (u.adjoint() * &a);
            beaten |= (&a - &other).norm().powi(2) < resid;
        }
    }
    pass &= ey < 1e-12 && !beaten;
    notes.push(format!("Eckart-Young {ey:.1e}"));

    // scale and phase invariance of localize_block on noisy rank-1 data
    let mut invariant = true;
    for _ in 0..10 {
        let alpha = mdp(random_direction(&mut rng), 3);
        let mut a = DMatrix::from_fn(16, 97, |r, _| alpha.coeffs()[r]);
        for j in 0..97 {
            let s = c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            a.column_mut(j).scale_mut(s.norm());
        }
        a += random_matrix(&mut rng, 16, 97) * c64(0.5, 0.0);
        let base = localize_block(&CoefficientMatrix::new(a.clone(), 3).unwrap(), dict).unwrap();
        for g in [c64(1e-3, 0.0), c64(-7.0, 0.0), Complex64::from_polar(3.0, 1.1)] {
            let m = localize_block(&CoefficientMatrix::new(&a * g, 3).unwrap(), dict).unwrap();
            invariant &= m.dict_index == base.dict_index;
        }
    }
    pass &= invariant;
    notes.push(format!("invariance {}", if invariant { "exact" } else { "broken" }));

    let mut nine = vec![1.0; 9];
    nine.push(45.0);
    let examples = probability_of_detection(&nine).unwrap() == 0.9
        && probability_of_detection(&[20.0, 30.0]).unwrap() == 0.0
        && probability_of_detection(&[10.0]).unwrap() == 0.0
        && (doa_rmse(&[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12
        && doa_rmse(&[0.0, 0.0]) == Some(0.0)
        && doa_rmse(&[2.0, 2.0, 90.0]) == Some(2.0)
        && mean_std(&[7.0]) == Some((7.0, 0.0));
    pass &= examples;
    notes.push(format!("PD/RMSE examples {}", if examples { "ok" } else { "wrong" }));

    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    Outcome { pass, detail: format!("{}, {secs:.1} s", notes.join(", ")) }
}

fn criterion_9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_shd-lra");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "2")] {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args(["--out-dir", out.to_str().unwrap(), "sweep", "--t60-s", "0,0.5", "--snr-db", "10", "--runs", "2"])
            .args(["--duration-s", "1.2", "--master-seed", "9", "--jobs", jobs])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(std::fs::read(out.join("trials.csv")).unwrap());
    }
    let rows = outputs[0].iter().filter(|&&b| b == b'\n').count() - 1;
    Outcome {
        pass: rows > 0 && outputs[0] == outputs[1],
        detail: format!(
            "trials.csv with {rows} rows {} between --jobs 1 and --jobs 2",
            if outputs[0] == outputs[1] { "byte-identical" } else { "differs" }
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let dict = build_dictionary(3.0, 2.0, 3).unwrap();
    let mut failed = Vec::new();
    let mut check = |n: usize, title: &str, o: Outcome| {
        report(n, title, &o);
        if !o.pass {
            failed.push(n);
        }
    };
    check(1, "MDP norm identity", criterion_1());
    check(2, "rank-1 oracle", criterion_2(&dict));
    check(3, "end-to-end synthesis/analysis", criterion_3(&dict));

    let cfg = SweepConfig { t60_s: vec![0.0, 0.5, 1.0], snr_db: vec![5.0, 40.0], runs: 10, ..Default::default() };
    let start = Instant::now();
    let sweep = run_sweep(&cfg, dict.clone(), None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(sweep.failures.is_empty(), "{:?}", sweep.failures);
    check(4, "anechoic high-SNR detection", criterion_4(&sweep.summary, secs));
    check(5, "degradation with T60 at 5 dB", criterion_5(&sweep.summary));
    let (o6, soft6) = criterion_6(&sweep.summary);
    if o6.pass || !soft6 {
        check(6, "SHD-LRA vs SHD-MUSIC at T60 0.5 s, 5 dB", o6);
    } else {
        emit(&format!("SOFT criterion 6: SHD-LRA vs SHD-MUSIC at T60 0.5 s, 5 dB: {} (shortfall within one std)", o6.detail));
    }
    check(7, "one SVD per block", criterion_7(&dict));
    check(8, "property suites", criterion_8(&dict));
    check(9, "sweep determinism", criterion_9());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
