//! Acceptance suite: one test per criterion (the training-trend criteria
//! share one test so their models can be scheduled together), each printing a
//! [PASS]/[FAIL] line. Run with `cargo test -p recon-cli --test acceptance`;
//! add `-- --nocapture` to watch progress.

use rayon::prelude::*;
use recon_core::dataio::{generate_dataset, GenParams, Scan};
use recon_core::encoding::{apply_mask, restrict_to_mask, CoilSensitivities, SenseOperator};
use recon_core::grid::{vdot, ComplexGrid};
use recon_core::metrics::{nmse, ssim};
use recon_core::network::{count_params, unrolled_forward, NetConfig, NetworkParams};
use recon_core::rng::Splitmix64;
use recon_core::sampling::{
    make_omega_mask, split_omega, SamplingMask, SplitOptions, SplitScheme,
};
use recon_core::solvers::{cg_sense, dc_solve};
use recon_core::training::{
    adam_step, backprop, fit, norm_l1l2_loss, selfsup_loss, AdamState, LossKind, LossTarget,
    TrainOptions,
};
use recon_core::Complex64;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

/// Default synthetic cohort: 20 training and 10 test scans, 64x64, 4 coils,
/// R = 4 with 8 ACS lines, noise 0.01.
const TRAIN_SEED: u64 = 2024;
const TEST_SEED: u64 = 9090;
const BASE_SEED: u64 = 7;

/// Training recipe for the trend criteria (>= 50 epochs required).
const TREND_EPOCHS: usize = 100;
const TREND_LR: f64 = 3e-3;

fn trend_net() -> NetConfig {
    NetConfig {
        unrolls: 5,
        cg_iters: 10,
        channels: 8,
        res_blocks: 2,
        kernel: 3,
        scale: 0.1,
    }
}

fn cohort() -> &'static (Vec<Scan>, Vec<Scan>) {
    static COHORT: OnceLock<(Vec<Scan>, Vec<Scan>)> = OnceLock::new();
    COHORT.get_or_init(|| {
        let train = GenParams {
            scans: 20,
            rows: 64,
            cols: 64,
            ncoils: 4,
            accel: 4,
            acs_lines: 8,
            noise_sigma: 0.01,
            seed: TRAIN_SEED,
        };
        let test = GenParams {
            scans: 10,
            seed: TEST_SEED,
            ..train.clone()
        };
        (
            generate_dataset(&train).unwrap(),
            generate_dataset(&test).unwrap(),
        )
    })
}

fn with_splits(scans: &[Scan], rho: f64, scheme: SplitScheme, seed: u64) -> Vec<Scan> {
    let mut out = scans.to_vec();
    for (i, scan) in out.iter_mut().enumerate() {
        scan.split = Some(
            split_omega(
                &scan.mask,
                rho,
                scheme,
                seed ^ ((i as u64) << 8),
                &SplitOptions::default(),
            )
            .unwrap(),
        );
    }
    out
}

/// Self-supervised training, memoized on (rho, scheme, seed) so the trend
/// criteria share models.
fn trained_selfsup(rho: f64, scheme: SplitScheme, seed: u64) -> Arc<NetworkParams> {
    type Key = (u64, &'static str, u64);
    static CACHE: OnceLock<Mutex<std::collections::HashMap<Key, Arc<NetworkParams>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(std::collections::HashMap::new()));
    let key: Key = ((rho * 1000.0).round() as u64, scheme.name(), seed);
    if let Some(hit) = cache.lock().unwrap().get(&key) {
        return Arc::clone(hit);
    }
    let (train, _) = cohort();
    let scans = with_splits(train, rho, scheme, seed);
    let opts = TrainOptions {
        epochs: TREND_EPOCHS,
        lr: TREND_LR,
        seed,
    };
    let params = Arc::new(
        fit(&scans, &trend_net(), LossKind::SelfsupKspace, &opts)
            .unwrap()
            .params,
    );
    cache
        .lock()
        .unwrap()
        .entry(key)
        .or_insert_with(|| Arc::clone(&params));
    params
}

fn trained_supervised(seed: u64) -> Arc<NetworkParams> {
    static CACHE: OnceLock<Arc<NetworkParams>> = OnceLock::new();
    Arc::clone(CACHE.get_or_init(|| {
        let (train, _) = cohort();
        let opts = TrainOptions {
            epochs: TREND_EPOCHS,
            lr: TREND_LR,
            seed,
        };
        Arc::new(
            fit(train, &trend_net(), LossKind::SupervisedImage, &opts)
                .unwrap()
                .params,
        )
    }))
}

fn mean_test_nmse(params: &NetworkParams, test: &[Scan]) -> f64 {
    let cfg = trend_net();
    let values: Vec<f64> = test
        .par_iter()
        .map(|scan| {
            let op = scan.omega_operator().unwrap();
            let rec = unrolled_forward(params, &cfg, &op, &scan.kspace).unwrap();
            nmse(scan.ref_image.as_ref().unwrap(), &rec).unwrap()
        })
        .collect();
    values.iter().sum::<f64>() / values.len() as f64
}

fn random_grid(rows: usize, cols: usize, rng: &mut Splitmix64) -> ComplexGrid {
    let data = (0..rows * cols)
        .map(|_| Complex64::new(rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 2.0 - 1.0))
        .collect();
    ComplexGrid::new(rows, cols, data).unwrap()
}

fn report(criterion: &str, pass: bool, detail: &str, start: Instant) -> bool {
    let status = if pass { "PASS" } else { "FAIL" };
    println!(
        "[{status}] {criterion}: {detail} ({:.1}s)",
        start.elapsed().as_secs_f64()
    );
    pass
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_adjoint_exactness() {
    let start = Instant::now();
    let (rows, cols, ncoils) = (64, 64, 4);
    let mut rng = Splitmix64::new(11);
    let mut worst: f64 = 0.0;
    for trial in 0..50u64 {
        let sens = Arc::new(
            recon_core::dataio::make_coilmaps(rows, cols, ncoils, 1000 + trial).unwrap(),
        );
        let mask = if trial % 2 == 0 {
            make_omega_mask(rows, cols, 4, 8).unwrap()
        } else {
            // Random point mask.
            loop {
                let data: Vec<bool> = (0..rows * cols).map(|_| rng.next_f64() < 0.4).collect();
                if data.iter().any(|&b| b) {
                    break SamplingMask::from_picked(
                        recon_core::sampling::BoolGrid::new(rows, cols, data).unwrap(),
                    )
                    .unwrap();
                }
            }
        };
        let op = SenseOperator::new(sens, mask).unwrap();
        let x = random_grid(rows, cols, &mut rng);
        let y: Vec<ComplexGrid> = (0..ncoils)
            .map(|_| random_grid(rows, cols, &mut rng))
            .collect();

        let ex = op.forward(&x).unwrap();
        let aty = op.adjoint(&y).unwrap();
        let ex_flat: Vec<Complex64> = ex.iter().flat_map(|g| g.data().iter().copied()).collect();
        let y_flat: Vec<Complex64> = y.iter().flat_map(|g| g.data().iter().copied()).collect();
        let lhs = vdot(&ex_flat, &y_flat).unwrap();
        let rhs = vdot(x.data(), aty.data()).unwrap();
        let ex_norm = ex_flat.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let y_norm = y_flat.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max((lhs - rhs).norm() / (ex_norm * y_norm));
    }
    let pass = report(
        "C1 adjoint exactness",
        worst < 1e-12,
        &format!("worst residual {worst:.3e} over 50 pairs (tolerance 1e-12)"),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_02_dc_closed_form() {
    let start = Instant::now();
    let (rows, cols) = (64, 64);
    let ones = ComplexGrid::new(rows, cols, vec![Complex64::new(1.0, 0.0); rows * cols]).unwrap();
    let sens = Arc::new(CoilSensitivities::new(vec![ones]).unwrap());
    let op = SenseOperator::new(sens, SamplingMask::full(rows, cols)).unwrap();
    let mut rng = Splitmix64::new(12);
    let y = op.forward(&random_grid(rows, cols, &mut rng)).unwrap();
    let z = random_grid(rows, cols, &mut rng);
    let mut worst: f64 = 0.0;
    for mu in [0.1, 1.0, 10.0] {
        let (x, _) = dc_solve(&op, &y, &z, mu, 20, 1e-13).unwrap();
        let expected = op
            .adjoint(&y)
            .unwrap()
            .add(&z.scale_real(mu))
            .unwrap()
            .scale_real(1.0 / (1.0 + mu));
        worst = worst.max(x.sub(&expected).unwrap().l2() / expected.l2());
    }
    let pass = report(
        "C2 DC closed form",
        worst < 1e-10,
        &format!("worst relative error {worst:.3e} over mu in {{0.1, 1, 10}} (tolerance 1e-10)"),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_03_gradient_correctness() {
    let start = Instant::now();
    // 8x8 scan, single coil so the fixed-budget inner CG is converged and the
    // implicit data-consistency adjoint is exact.
    let gen = GenParams {
        scans: 1,
        rows: 8,
        cols: 8,
        ncoils: 1,
        accel: 2,
        acs_lines: 2,
        noise_sigma: 0.005,
        seed: 31,
    };
    let mut scan = recon_core::dataio::generate_scan(&gen, 0).unwrap();
    scan.split = Some(
        split_omega(
            &scan.mask,
            0.3,
            SplitScheme::GaussianDensity,
            5,
            &SplitOptions::default(),
        )
        .unwrap(),
    );
    let cfg = NetConfig {
        unrolls: 2,
        cg_iters: 8,
        channels: 4,
        res_blocks: 1,
        kernel: 3,
        scale: 0.1,
    };
    let params = NetworkParams::init(&cfg, 17);

    let split = scan.split.as_ref().unwrap();
    let dc_mask = SamplingMask::from_picked(split.dc_set.clone()).unwrap();
    let loss_mask = SamplingMask::from_picked(split.loss_set.clone()).unwrap();
    let mut y_dc = scan.kspace.clone();
    for g in y_dc.iter_mut() {
        apply_mask(g, &dc_mask);
    }
    let mut y_loss = scan.kspace.clone();
    for g in y_loss.iter_mut() {
        apply_mask(g, &loss_mask);
    }
    let op_dc = SenseOperator::new(Arc::clone(&scan.sens), dc_mask).unwrap();
    let op_loss = SenseOperator::new(Arc::clone(&scan.sens), loss_mask).unwrap();

    let target = LossTarget::SelfSupervised {
        op_dc: &op_dc,
        y_dc: &y_dc,
        op_loss: &op_loss,
        y_loss: &y_loss,
    };
    let bundle = backprop(&params, &cfg, &target).unwrap();

    let eval = |p: &NetworkParams| {
        selfsup_loss(p, &cfg, &op_dc, &y_dc, &op_loss, &y_loss).unwrap()
    };
    let h = 1e-5;
    let mut rng = Splitmix64::new(99);
    let mut indices: Vec<usize> = (0..20).map(|_| rng.next_below(params.len() - 1)).collect();
    indices.push(params.mu_index());
    let mut worst: f64 = 0.0;
    for &idx in &indices {
        let mut pp = params.clone();
        pp.data_mut()[idx] += h;
        let mut pm = params.clone();
        pm.data_mut()[idx] -= h;
        let fd = (eval(&pp) - eval(&pm)) / (2.0 * h);
        let an = bundle.grads[idx];
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    let pass = report(
        "C3 gradient correctness",
        worst < 1e-3,
        &format!(
            "worst relative error {worst:.3e} over {} sampled parameters incl. mu (tolerance 1e-3)",
            indices.len()
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_04_parameter_count() {
    let start = Instant::now();
    let reported = count_params(&NetConfig {
        channels: 64,
        res_blocks: 8,
        kernel: 3,
        ..NetConfig::default()
    });
    let fifteen_blocks = count_params(&NetConfig {
        channels: 64,
        res_blocks: 15,
        kernel: 3,
        ..NetConfig::default()
    });
    let pass = report(
        "C4 parameter count",
        reported == 592_129,
        &format!(
            "count(C=64, B=8) = {reported} (expected 592129); note count(C=64, B=15) = {fifteen_blocks}, the stated block count is inconsistent with the stated total"
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_05_split_exactness() {
    let start = Instant::now();
    let mask = make_omega_mask(64, 64, 4, 8).unwrap();
    let omega_ok = mask.count() == 1408;
    let mut all_ok = omega_ok;
    let mut loss_count = 0;
    for seed in 0..100u64 {
        let split = split_omega(
            &mask,
            0.4,
            SplitScheme::GaussianDensity,
            seed,
            &SplitOptions::default(),
        )
        .unwrap();
        loss_count = split.loss_count();
        all_ok &= split.loss_count() == 563 && split.partitions(&mask);
    }
    let pass = report(
        "C5 split exactness",
        all_ok,
        &format!(
            "|acquired| = {} (expected 1408), |loss| = {loss_count} (expected 563), partition verified over 100 seeds",
            mask.count()
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_06_loss_identities() {
    let start = Instant::now();
    let mut rng = Splitmix64::new(21);
    let u: Vec<Complex64> = (0..64)
        .map(|_| Complex64::new(rng.next_f64() + 0.1, rng.next_f64() - 0.5))
        .collect();
    let zeros = vec![Complex64::new(0.0, 0.0); 64];
    let x = random_grid(16, 16, &mut rng);

    let id_zero = norm_l1l2_loss(&u, &u).unwrap();
    let id_two = norm_l1l2_loss(&u, &zeros).unwrap();
    let nmse_one = nmse(&x, &ComplexGrid::zeros(16, 16)).unwrap();
    let ssim_one = ssim(&x, &x).unwrap();

    let pass = report(
        "C6 loss identities",
        id_zero == 0.0
            && (id_two - 2.0).abs() < 1e-15
            && (nmse_one - 1.0).abs() < 1e-15
            && (ssim_one - 1.0).abs() < 1e-12,
        &format!(
            "loss(u,u) = {id_zero}, loss(u,0) = {id_two}, nmse(x,0) = {nmse_one}, ssim(x,x) = {ssim_one}"
        ),
        start,
    );
    assert!(pass);
}

/// Criteria 7-9 share the trained models, so one test evaluates all three and
/// prints one line each.
#[test]
fn criterion_07_08_09_training_trends() {
    let suite_start = Instant::now();
    let (train, test) = cohort();
    let mut failures = Vec::new();

    // Schedule every distinct training through one parallel pass. Seeds: the
    // base seed plus two more for the scheme study.
    let seeds = [BASE_SEED, BASE_SEED + 1, BASE_SEED + 2];
    let mut jobs: Vec<(f64, SplitScheme, u64)> = vec![
        (0.4, SplitScheme::GaussianDensity, BASE_SEED), // c7 + c8 endpoint
        (0.05, SplitScheme::GaussianDensity, BASE_SEED),
        (0.1, SplitScheme::GaussianDensity, BASE_SEED), // c8 + c9 gaussian seed 0
        (0.2, SplitScheme::GaussianDensity, BASE_SEED),
        (0.3, SplitScheme::GaussianDensity, BASE_SEED),
    ];
    for &seed in &seeds {
        jobs.push((0.1, SplitScheme::UniformRandom, seed));
        if seed != BASE_SEED {
            jobs.push((0.1, SplitScheme::GaussianDensity, seed));
        }
    }
    // Supervised model plus all self-supervised jobs, scheduled together.
    rayon::join(
        || trained_supervised(BASE_SEED),
        || {
            jobs.par_iter().for_each(|&(rho, scheme, seed)| {
                trained_selfsup(rho, scheme, seed);
            });
        },
    );

    // Criterion 7: self-supervised beats CG-SENSE and stays within 1.5x of
    // supervised on mean test NMSE.
    {
        let start = Instant::now();
        let selfsup = mean_test_nmse(&trained_selfsup(0.4, SplitScheme::GaussianDensity, BASE_SEED), test);
        let supervised = mean_test_nmse(&trained_supervised(BASE_SEED), test);
        let cgsense: f64 = {
            let vals: Vec<f64> = test
                .par_iter()
                .map(|scan| {
                    let op = scan.omega_operator().unwrap();
                    let (rec, _) = cg_sense(&op, &scan.kspace, 50, 1e-10).unwrap();
                    nmse(scan.ref_image.as_ref().unwrap(), &rec).unwrap()
                })
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let pass = selfsup < cgsense && selfsup <= 1.5 * supervised;
        if !report(
            "C7 end-to-end trend",
            pass,
            &format!(
                "mean test NMSE: selfsup {selfsup:.5}, supervised {supervised:.5}, cgsense {cgsense:.5}; require selfsup < cgsense and selfsup <= 1.5 x supervised"
            ),
            start,
        ) {
            failures.push("C7");
        }

        // Recorded trend check (not a criterion): held-out loss-domain error
        // of the split-trained model vs one trained with no split (loss and
        // data consistency both over the full acquired set).
        let no_split = train_without_split(train);
        let split_model = trained_selfsup(0.4, SplitScheme::GaussianDensity, BASE_SEED);
        let eval_lambda = |params: &NetworkParams| -> f64 {
            let cfg = trend_net();
            let vals: Vec<f64> = test
                .par_iter()
                .enumerate()
                .map(|(i, scan)| {
                    let split = split_omega(
                        &scan.mask,
                        0.4,
                        SplitScheme::GaussianDensity,
                        4000 + i as u64,
                        &SplitOptions::default(),
                    )
                    .unwrap();
                    let dc_mask = SamplingMask::from_picked(split.dc_set.clone()).unwrap();
                    let loss_mask = SamplingMask::from_picked(split.loss_set.clone()).unwrap();
                    let mut y_dc = scan.kspace.clone();
                    for g in y_dc.iter_mut() {
                        apply_mask(g, &dc_mask);
                    }
                    let mut y_loss = scan.kspace.clone();
                    for g in y_loss.iter_mut() {
                        apply_mask(g, &loss_mask);
                    }
                    let op_dc = SenseOperator::new(Arc::clone(&scan.sens), dc_mask).unwrap();
                    let op_loss = SenseOperator::new(Arc::clone(&scan.sens), loss_mask).unwrap();
                    selfsup_loss(params, &cfg, &op_dc, &y_dc, &op_loss, &y_loss).unwrap()
                })
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let split_loss = eval_lambda(&split_model);
        let nosplit_loss = eval_lambda(&no_split);
        println!(
            "[INFO] generalization check (recorded, not asserted): held-out loss-domain error {:.5} with the split vs {:.5} without; {}",
            split_loss,
            nosplit_loss,
            if split_loss <= nosplit_loss {
                "split-trained generalizes better, as hypothesized"
            } else {
                "no-split model scored better on this cohort"
            }
        );
    }

    // Criterion 8: more loss points help; NMSE at rho 0.4 beats rho 0.05.
    {
        let start = Instant::now();
        let nmse_at = |rho: f64| {
            mean_test_nmse(
                &trained_selfsup(rho, SplitScheme::GaussianDensity, BASE_SEED),
                test,
            )
        };
        let sweep: Vec<(f64, f64)> = [0.05, 0.1, 0.2, 0.3, 0.4]
            .iter()
            .map(|&rho| (rho, nmse_at(rho)))
            .collect();
        let low = sweep[0].1;
        let high = sweep[4].1;
        let pass = high < low;
        let detail: Vec<String> = sweep
            .iter()
            .map(|(r, v)| format!("rho {r}: {v:.5}"))
            .collect();
        if !report(
            "C8 rho-sweep trend",
            pass,
            &format!("mean test NMSE {}; require rho 0.4 < rho 0.05", detail.join(", ")),
            start,
        ) {
            failures.push("C8");
        }
    }

    // Criterion 9: Gaussian loss-subset selection at rho 0.1 is no worse than
    // uniform across three training seeds (5% tie band passes with warning).
    {
        let start = Instant::now();
        let per_seed: Vec<(u64, f64, f64)> = seeds
            .iter()
            .map(|&seed| {
                let g = mean_test_nmse(
                    &trained_selfsup(0.1, SplitScheme::GaussianDensity, seed),
                    test,
                );
                let u = mean_test_nmse(
                    &trained_selfsup(0.1, SplitScheme::UniformRandom, seed),
                    test,
                );
                (seed, g, u)
            })
            .collect();
        let mean_g = per_seed.iter().map(|&(_, g, _)| g).sum::<f64>() / per_seed.len() as f64;
        let mean_u = per_seed.iter().map(|&(_, _, u)| u).sum::<f64>() / per_seed.len() as f64;
        let pass = mean_g <= 1.05 * mean_u;
        let strict = mean_g <= mean_u;
        let seed_detail: Vec<String> = per_seed
            .iter()
            .map(|(s, g, u)| format!("seed {s}: gaussian {g:.5} vs uniform {u:.5}"))
            .collect();
        let variance_g = per_seed
            .iter()
            .map(|&(_, g, _)| (g - mean_g).powi(2))
            .sum::<f64>()
            / per_seed.len() as f64;
        let variance_u = per_seed
            .iter()
            .map(|&(_, _, u)| (u - mean_u).powi(2))
            .sum::<f64>()
            / per_seed.len() as f64;
        if pass && !strict {
            println!(
                "[WARN] C9: gaussian within the 5% tie band rather than strictly better (gaussian {mean_g:.5} vs uniform {mean_u:.5})"
            );
        }
        if !report(
            "C9 loss-subset scheme trend",
            pass,
            &format!(
                "mean gaussian {mean_g:.5} (seed variance {variance_g:.2e}) vs mean uniform {mean_u:.5} (seed variance {variance_u:.2e}); {}",
                seed_detail.join("; ")
            ),
            start,
        ) {
            failures.push("C9");
        }
    }

    println!(
        "[INFO] training-trend suite total wall time {:.1} min",
        suite_start.elapsed().as_secs_f64() / 60.0
    );
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

/// Self-supervised objective with loss and data consistency both over the
/// full acquired set ("no split"), trained with the same recipe.
fn train_without_split(train: &[Scan]) -> NetworkParams {
    let cfg = trend_net();
    let mut params = NetworkParams::init(&cfg, BASE_SEED);
    let mut state = AdamState::new(params.len(), TREND_LR);
    let prepared: Vec<(SenseOperator, Vec<ComplexGrid>)> = train
        .iter()
        .map(|scan| (scan.omega_operator().unwrap(), scan.kspace.clone()))
        .collect();
    for epoch in 0..TREND_EPOCHS {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut rng = Splitmix64::with_stream(BASE_SEED, 0x6e6f_7370 ^ epoch as u64);
        rng.shuffle(&mut order);
        for idx in order {
            let (op, y) = &prepared[idx];
            let target = LossTarget::SelfSupervised {
                op_dc: op,
                y_dc: y,
                op_loss: op,
                y_loss: y,
            };
            let bundle = backprop(&params, &cfg, &target).unwrap();
            adam_step(&mut state, &mut params, &bundle).unwrap();
        }
    }
    params
}

#[test]
fn criterion_10_reproducibility() {
    let start = Instant::now();
    let dir = std::env::temp_dir().join(format!("recon_accept10_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let recon = env!("CARGO_BIN_EXE_recon");

    let sh = |args: &[&str]| {
        let status = std::process::Command::new(recon)
            .args(args)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success(), "command failed: {args:?}");
    };

    let train_ds = dir.join("train");
    let test_ds = dir.join("test");
    sh(&[
        "gen-data", "--scans", "6", "--size", "32", "--coils", "2", "--seed", "41",
        "--out", train_ds.to_str().unwrap(),
    ]);
    sh(&[
        "gen-data", "--scans", "3", "--size", "32", "--coils", "2", "--seed", "42",
        "--out", test_ds.to_str().unwrap(),
    ]);

    let run_compare = |out: &std::path::Path| {
        sh(&[
            "experiment", "compare",
            "--train", train_ds.to_str().unwrap(),
            "--test", test_ds.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "--epochs", "3", "--unrolls", "2", "--cg-iters", "5",
            "--channels", "4", "--res-blocks", "1",
            "--tgv-iters", "60", "--solver-iters", "20", "--seed", "5",
        ]);
    };
    let (out_a, out_b) = (dir.join("a"), dir.join("b"));
    run_compare(&out_a);
    run_compare(&out_b);

    let list = |root: &std::path::Path| {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push(p.strip_prefix(root).unwrap().to_path_buf());
                }
            }
        }
        files.sort();
        files
    };
    let (files_a, files_b) = (list(&out_a), list(&out_b));
    let mut identical = files_a == files_b && !files_a.is_empty();
    let mut compared = 0;
    if identical {
        for rel in &files_a {
            let (ba, bb) = (
                std::fs::read(out_a.join(rel)).unwrap(),
                std::fs::read(out_b.join(rel)).unwrap(),
            );
            if ba != bb {
                identical = false;
                println!("[FAIL] C10 detail: {} differs between runs", rel.display());
                break;
            }
            compared += 1;
        }
    }
    let n_pgm = files_a
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .count();
    let has_csv = files_a.iter().any(|p| p.ends_with("metrics.csv"));
    // The compare suite produces one image per method per scan plus the
    // reference: 5 x 3 test scans.
    let pass = identical && has_csv && n_pgm == 15;
    report(
        "C10 reproducibility",
        pass,
        &format!("{compared} files byte-identical across two runs ({n_pgm} PGMs + CSV + provenance)"),
        start,
    );
    let text = std::fs::read_to_string(out_a.join("metrics.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "scan_id,method,rho,scheme,nmse,ssim");
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(pass);
}

/// Restriction consistency (training module invariant): the |loss| arguments
/// the losses claim to use are exactly what they use.
#[test]
fn losses_reduce_to_their_stated_arguments() {
    let gen = GenParams {
        scans: 1,
        rows: 16,
        cols: 16,
        ncoils: 2,
        accel: 2,
        acs_lines: 4,
        noise_sigma: 0.01,
        seed: 77,
    };
    let mut scan = recon_core::dataio::generate_scan(&gen, 0).unwrap();
    scan.split = Some(
        split_omega(
            &scan.mask,
            0.3,
            SplitScheme::UniformRandom,
            9,
            &SplitOptions::default(),
        )
        .unwrap(),
    );
    let cfg = NetConfig {
        unrolls: 1,
        cg_iters: 5,
        channels: 4,
        res_blocks: 1,
        kernel: 3,
        scale: 0.1,
    };
    let params = NetworkParams::init(&cfg, 3);
    let split = scan.split.as_ref().unwrap();
    let dc_mask = SamplingMask::from_picked(split.dc_set.clone()).unwrap();
    let loss_mask = SamplingMask::from_picked(split.loss_set.clone()).unwrap();
    let mut y_dc = scan.kspace.clone();
    for g in y_dc.iter_mut() {
        apply_mask(g, &dc_mask);
    }
    let mut y_loss = scan.kspace.clone();
    for g in y_loss.iter_mut() {
        apply_mask(g, &loss_mask);
    }
    let op_dc = SenseOperator::new(Arc::clone(&scan.sens), dc_mask).unwrap();
    let op_loss = SenseOperator::new(Arc::clone(&scan.sens), loss_mask).unwrap();

    let through_api = selfsup_loss(&params, &cfg, &op_dc, &y_dc, &op_loss, &y_loss).unwrap();
    let x = unrolled_forward(&params, &cfg, &op_dc, &y_dc).unwrap();
    let pred = op_loss.forward(&x).unwrap();
    let by_hand = norm_l1l2_loss(
        &restrict_to_mask(&y_loss, op_loss.mask()),
        &restrict_to_mask(&pred, op_loss.mask()),
    )
    .unwrap();
    assert_eq!(through_api, by_hand);
}
