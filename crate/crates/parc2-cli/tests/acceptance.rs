//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them).
//!
//! Budgeted suites also assert their wall-clock limits.

use std::fs;
use std::process::Command;
use std::time::Instant;

use parc2::blocks::{
    adapt_to_resolution, build_model, channel_bgu_param_formula, count_params_and_macs,
    ffn_param_formula, reference_counts, Variant,
};
use parc2::checkpoint::{checkpoint_load, checkpoint_save, payload_bytes};
use parc2::ops::resize_kernel_linear;
use parc2::perf::{
    bench, fast_dwconv_counting, plan_lowering, BenchOp, DwKernel, ExecMode,
    DEFAULT_WORKSPACE_BUDGET,
};
use parc2::tensor::random_normal;
use parc2::verify::{run_suite, Suite, SuiteReport};
use parc2::Rng;

fn report_line(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[acceptance] {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn failing_ids(report: &SuiteReport) -> Vec<String> {
    report
        .cases
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.id.clone())
        .collect()
}

#[test]
fn a1_oracle_equivalence_all_conv_paths() {
    let start = Instant::now();
    let report = run_suite(Suite::Oracle).expect("suite runs");
    let elapsed = start.elapsed();
    let ok = report.pass && report.cases.len() >= 100 && elapsed.as_secs() < 120;
    report_line(
        "1 oracle equivalence (f32 1e-4, f64 1e-10)",
        ok,
        &format!("{} cases in {elapsed:.2?}", report.cases.len()),
    );
    assert!(elapsed.as_secs() < 120, "budget exceeded: {elapsed:?}");
    assert!(report.cases.len() >= 100);
    assert!(report.pass, "failing: {:?}", failing_ids(&report));
}

#[test]
fn a2_commutativity_of_pass_order() {
    let report = run_suite(Suite::Commute).expect("suite runs");
    report_line(
        "2 commutativity (f32 1e-5, f64 1e-12)",
        report.pass,
        &format!("{} cases", report.cases.len()),
    );
    assert!(report.pass, "failing: {:?}", failing_ids(&report));
}

#[test]
fn a3_reparameterization_kernels_and_model() {
    let start = Instant::now();
    let report = run_suite(Suite::Reparam).expect("suite runs");
    let elapsed = start.elapsed();
    let ok = report.pass && elapsed.as_secs() < 120;
    report_line(
        "3 reparameterization (pair==dense, branches==fused, model logits 1e-3 + argmax x32)",
        ok,
        &format!("{} cases in {elapsed:.2?}", report.cases.len()),
    );
    assert!(elapsed.as_secs() < 120, "budget exceeded: {elapsed:?}");
    assert!(report.pass, "failing: {:?}", failing_ids(&report));
}

#[test]
fn a4_gradient_correctness() {
    let report = run_suite(Suite::Grad).expect("suite runs");
    let per_op = 20;
    let ok = report.pass && report.cases.len() >= 5 * per_op;
    report_line(
        "4 analytic VJPs vs central differences (f64, rel 1e-6, >=20 cases/op)",
        ok,
        &format!("{} cases", report.cases.len()),
    );
    assert!(report.cases.len() >= 5 * per_op);
    assert!(report.pass, "failing: {:?}", failing_ids(&report));
}

#[test]
fn a5_position_encoding_contrast_and_receptive_field() {
    let shift = run_suite(Suite::Shift).expect("suite runs");
    let rf = run_suite(Suite::Rf).expect("suite runs");
    let ok = shift.pass && rf.pass;
    report_line(
        "5 circular equivariance vs oversized violation + receptive-field probes",
        ok,
        &format!(
            "{} shift cases, {} rf cases",
            shift.cases.len(),
            rf.cases.len()
        ),
    );
    assert!(shift.pass, "failing: {:?}", failing_ids(&shift));
    assert!(rf.pass, "failing: {:?}", failing_ids(&rf));
}

#[test]
fn a6_parameter_and_mac_accounting() {
    let mut ok = true;
    let mut details = Vec::new();
    for v in Variant::ALL {
        let cfg = v.config((224, 224)).expect("valid config");
        let report = count_params_and_macs(&cfg).expect("counts");
        let reference = reference_counts(v);
        let dp = (report.params_millions() - reference.params_m) / reference.params_m;
        let dm = (report.macs_billions() - reference.macs_g) / reference.macs_g;
        ok &= dp.abs() <= 0.05 && dm.abs() <= 0.10;
        details.push(format!(
            "{}: {:.2}M ({:+.2}%) / {:.2}G ({:+.2}%)",
            v.name(),
            report.params_millions(),
            100.0 * dp,
            report.macs_billions(),
            100.0 * dm
        ));
        for stage in &report.stages {
            let formula = channel_bgu_param_formula(stage.channels, cfg.alpha_tilde);
            ok &= stage.per_block.channel_bgu.params == formula;
            ok &= formula < ffn_param_formula(stage.channels, 4.0);
        }
    }
    // enumeration agrees with a built model
    let cfg = Variant::Xt.config((64, 64)).expect("valid config");
    let enumerated = count_params_and_macs(&cfg).expect("counts").total.params;
    let built = build_model(&cfg, &mut Rng::new(0))
        .expect("builds")
        .num_params();
    ok &= enumerated == built;

    report_line(
        "6 params within 5% and MACs within 10% of the reference table; gate-unit formula exact",
        ok,
        &details.join("; "),
    );
    assert!(ok, "{details:?}");
}

#[test]
fn a7_kernel_size_arithmetic() {
    let cfg = Variant::T.config((224, 224)).expect("valid config");
    let model = build_model(&cfg, &mut Rng::new(1)).expect("builds");
    let len224 = model.stages[0][0].spatial.oversized.len_h();

    let adapted = adapt_to_resolution(&model, 160, 160).expect("adapts");
    let len160 = adapted.stages[0][0].spatial.oversized.len_h();

    // same-size resize is an exact identity on the raw taps
    let pair = &model.stages[0][0].spatial.oversized;
    let same = resize_kernel_linear(pair, 56, 56).expect("resizes");
    let identical = same == *pair;

    let ok = len224 == 111 && len160 == 79 && identical;
    report_line(
        "7 stage-1 kernel lengths: 111 at 224, 79 after adapting to 160, same-size identity",
        ok,
        &format!("len@224={len224}, len@160={len160}, identity={identical}"),
    );
    assert!(ok);
}

#[test]
fn a8_performance_floor_and_plan_accounting() {
    // exact plan arithmetic: dense / separable = 111*111 / (111+111) = 55.5
    let dense = plan_lowering(64, 56, 56, 111, 111, DEFAULT_WORKSPACE_BUDGET).expect("plan");
    let vert = plan_lowering(64, 56, 56, 111, 1, DEFAULT_WORKSPACE_BUDGET).expect("plan");
    let horiz = plan_lowering(64, 56, 56, 1, 111, DEFAULT_WORKSPACE_BUDGET).expect("plan");
    let separable_macs = vert.macs + horiz.macs;
    let ratio_exact = dense.macs * 2 == separable_macs * 111;
    let ratio = dense.macs as f64 / separable_macs as f64;

    // executed MACs equal the plan exactly (instrumented run)
    let mut rng = Rng::new(80);
    let x: parc2::FeatureMap<f32> = random_normal((1, 64, 56, 56), &mut rng, 1.0);
    let pair = parc2::ops::OversizedKernelPair::random(64, 56, 56, &mut rng);
    let (_, executed) = fast_dwconv_counting(
        &x,
        DwKernel::Vertical(pair.k_h()),
        &vert,
        ExecMode::Sequential,
    )
    .expect("runs");
    let macs_match = executed == vert.macs;

    // measured floor: separable fast path at least 2x faster than the naive
    // oracle at the stage-1 shape, both verified before timing
    let mut rng = Rng::new(81);
    let fast = bench(
        BenchOp::SeparableFast,
        (1, 64, 56, 56),
        3,
        10,
        &mut rng,
        ExecMode::Sequential,
    )
    .expect("bench");
    let mut rng = Rng::new(81);
    let naive = bench(
        BenchOp::SeparableNaive,
        (1, 64, 56, 56),
        3,
        10,
        &mut rng,
        ExecMode::Sequential,
    )
    .expect("bench");
    let speedup = naive.median_ns as f64 / fast.median_ns as f64;

    let ok = ratio_exact
        && (ratio - 55.5).abs() < 1e-12
        && macs_match
        && fast.verified
        && naive.verified
        && speedup >= 2.0;
    report_line(
        "8 fast path >=2x over naive at C=64 56x56; plan MAC ratio exactly 55.5",
        ok,
        &format!(
            "speedup {speedup:.1}x (fast {}ns vs naive {}ns), ratio {ratio}, executed=plan {macs_match}",
            fast.median_ns, naive.median_ns
        ),
    );
    assert!(ok);
}

#[test]
fn a9_end_to_end_determinism() {
    let dir = tempfile::tempdir().expect("tempdir");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = Command::new(env!("CARGO_BIN_EXE_parc2"))
            .args([
                "forward",
                "--variant",
                "XT",
                "--seed",
                "42",
                "--input",
                "random:2x3x64x64",
                "--out",
                path.to_str().unwrap(),
            ])
            .output()
            .expect("runs");
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let csv_identical = fs::read(&a).unwrap() == fs::read(&b).unwrap();

    // checkpoint round trip: save -> load -> save is payload-identical and
    // tensor-bit-identical
    let cfg = Variant::Xt.config((64, 64)).expect("valid config");
    let model = build_model(&cfg, &mut Rng::new(42)).expect("builds");
    let c1 = dir.path().join("m1.parc2");
    let c2 = dir.path().join("m2.parc2");
    checkpoint_save(&model, &c1).expect("saves");
    let loaded = checkpoint_load(&c1).expect("loads");
    checkpoint_save(&loaded, &c2).expect("saves");
    let payload_identical = payload_bytes(&c1).unwrap() == payload_bytes(&c2).unwrap();
    let mut bits_a = Vec::new();
    model.visit_tensors(&mut |_, _, d| bits_a.extend(d.iter().map(|v| v.to_bits())));
    let mut bits_b = Vec::new();
    loaded.visit_tensors(&mut |_, _, d| bits_b.extend(d.iter().map(|v| v.to_bits())));
    let tensors_identical = bits_a == bits_b;

    let ok = csv_identical && payload_identical && tensors_identical;
    report_line(
        "9 seeded forward twice is byte-identical; checkpoint round trip is bit-identical",
        ok,
        &format!("csv={csv_identical}, payload={payload_identical}, tensors={tensors_identical}"),
    );
    assert!(ok);
}
