//! Scratch calibration driver (not part of the deliverable test suite).

use hadeskit::config::RunConfig;
use hadeskit::model::{AspectMap, Variant};
use hadeskit::pipeline::{evaluate_detector, prepare_training, train_detector, Telemetry};
use hadeskit::synth::{emit_labels, gen_standard_suite, standard_profile};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let e1: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(30);
    let e2: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(30);
    let batch: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(32);
    let lr: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.001);
    let variants: Vec<Variant> = args
        .get(6)
        .map(|s| s.split(',').map(|v| Variant::parse(v).unwrap()).collect())
        .unwrap_or_else(|| vec![Variant::Full]);

    let t0 = std::time::Instant::now();
    let corpus = gen_standard_suite(seed, 10800).unwrap();
    let chunks = emit_labels(&corpus, 10, 10).unwrap();
    let labels: Vec<(u64, u8)> = chunks.iter().map(|c| (c.window_start, c.label.unwrap())).collect();
    let telemetry = Telemetry::from_frame(
        corpus.logs.clone(),
        &corpus.metrics,
        labels,
        corpus.provenance.clone(),
    );
    let aspect_map = AspectMap::from_json(&standard_profile().aspect_map_json()).unwrap();

    let mut config = RunConfig::default();
    config.seed = seed;
    config.chunking.l_max = 48;
    config.train.epochs_phase1 = e1;
    config.train.epochs_phase2 = e2;
    config.train.batch_size = batch;
    config.train.lr = lr;
    config.select.workloads = vec!["w0".into()];

    let prep = prepare_training(&telemetry, &aspect_map, &config).unwrap();
    let mut labeled_faults: std::collections::BTreeMap<String, u32> = Default::default();
    for c in &prep.train_labeled {
        if c.chunk.label == Some(1) {
            *labeled_faults.entry(c.chunk.provenance.fault_ids.join("+")).or_default() += 1;
        }
    }
    eprintln!("labeled positive chunks by fault: {labeled_faults:?}");
    eprintln!(
        "prep: {} labeled ({} pos) / {} unlabeled / {} test ({} pos), {} templates, {:.1}s",
        prep.train_labeled.len(),
        prep.train_labeled.iter().filter(|c| c.chunk.label == Some(1)).count(),
        prep.train_unlabeled.len(),
        prep.test.len(),
        prep.test.iter().filter(|c| c.chunk.label == Some(1)).count(),
        prep.template_count(),
        t0.elapsed().as_secs_f64()
    );

    for variant in variants {
        let t1 = std::time::Instant::now();
        config.variant = variant.name().to_string();
        let (detector, trace) = train_detector(&prep, &config).unwrap();
        let report = evaluate_detector(&detector, &prep, &prep.test).unwrap();
        let pseudo_info: Vec<String> = trace
            .iter()
            .filter(|r| r.phase == 2)
            .take(1)
            .map(|r| format!("L-first2 {:.3}", r.loss.l_minus))
            .collect();
        eprintln!(
            "{:>5} seed {}: F1 {:.4} Rec {:.4} Pre {:.4} (TP {} FP {} FN {}) {:.1}s {}",
            variant.name(),
            seed,
            report.f1,
            report.rec,
            report.pre,
            report.tp,
            report.fp,
            report.fn_,
            t1.elapsed().as_secs_f64(),
            pseudo_info.join(" ")
        );

        // Per-fault recall over positive test chunks.
        let mut by_fault: std::collections::BTreeMap<String, (u32, u32)> = Default::default();
        for c in &prep.test {
            if c.chunk.label != Some(1) {
                continue;
            }
            let input = c.input_for(variant, prep.template_count());
            let pred = detector.predict(&input).unwrap();
            let key = c.chunk.provenance.fault_ids.join("+");
            let e = by_fault.entry(key).or_insert((0, 0));
            e.1 += 1;
            if pred.label == 1 {
                e.0 += 1;
            }
        }
        let detail: Vec<String> = by_fault
            .iter()
            .map(|(k, (hit, total))| format!("{k} {hit}/{total}"))
            .collect();
        eprintln!("        recall by fault: {}", detail.join("  "));

        // False-positive windows with context.
        let mut fp_list = Vec::new();
        for c in &prep.test {
            if c.chunk.label != Some(0) {
                continue;
            }
            let input = c.input_for(variant, prep.template_count());
            let pred = detector.predict(&input).unwrap();
            if pred.label == 1 {
                let faults = c.chunk.provenance.fault_ids.join("+");
                fp_list.push(format!(
                    "{}s[{}]{:.2}",
                    c.chunk.window_start / 1000,
                    if faults.is_empty() { "-" } else { &faults },
                    pred.confidence
                ));
            }
        }
        eprintln!("        FPs: {}", fp_list.join(" "));
    }
}
