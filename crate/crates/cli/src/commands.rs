//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mono3d::depth::{Discretization, DiscretizationConfig};
use mono3d::eval::{evaluate, Difficulty, EvalConfig, EvalReport};
use mono3d::kitti::{
    parse_calibration, parse_label_file, serialize_calibration, serialize_label,
    serialize_prediction, split_from_dir, ObjectLabel, SplitList,
};
use mono3d::synth::{generate_scene, perturb, NoiseModel, SceneSpec};
use mono3d::target::{decode_objects, encode_targets, DepthCodec, FeatureGridMeta, FrameHeads};
use mono3d::Calibration;

use crate::opts::*;
use crate::util::{parallel_map, write_atomic};
use crate::{CliError, CliResult};

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Eval(opts) => cmd_eval(opts),
        Command::CodecTable(opts) => cmd_codec_table(opts),
        Command::DepthHist(opts) => cmd_depth_hist(opts),
        Command::CodecRoundtrip(opts) => cmd_codec_roundtrip(opts),
        Command::Synth(opts) => cmd_synth(opts),
        Command::Decode(opts) => cmd_decode(opts),
    }
}

fn load_split(dir: &Path, split: &Option<PathBuf>) -> CliResult<SplitList> {
    match split {
        Some(path) => Ok(SplitList::parse(&fs::read_to_string(path).map_err(|e| {
            CliError::Input(format!("cannot read split file {}: {e}", path.display()))
        })?)?),
        None => split_from_dir(dir)
            .map_err(|e| CliError::Input(format!("cannot scan {}: {e}", dir.display()))),
    }
}

fn frame_path(dir: &Path, id: u32, ext: &str) -> PathBuf {
    dir.join(format!("{}.{ext}", SplitList::format_id(id)))
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(opts: EvalOpts) -> CliResult {
    // Validate parameters before any file I/O.
    let configs: Vec<EvalConfig> = opts
        .metric
        .metrics()
        .into_iter()
        .map(|m| {
            EvalConfig::new(m, opts.iou_threshold)
                .map(|c| c.with_class(opts.class.clone()))
                .map_err(CliError::input)
        })
        .collect::<CliResult<_>>()?;

    let split = load_split(&opts.gt_dir, &opts.split)?;
    let missing: Vec<String> = split
        .ids()
        .iter()
        .flat_map(|&id| {
            [&opts.gt_dir, &opts.pred_dir, &opts.calib_dir]
                .into_iter()
                .filter(move |dir| !frame_path(dir, id, "txt").exists())
                .map(move |dir| format!("{}", frame_path(dir, id, "txt").display()))
        })
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Input(format!(
            "missing frame files:\n  {}",
            missing.join("\n  ")
        )));
    }

    struct FrameData {
        gt: Vec<ObjectLabel>,
        pred: Vec<ObjectLabel>,
    }
    let frames = parallel_map(split.ids().to_vec(), opts.jobs, |id| {
        let gt = parse_label_file(&fs::read_to_string(frame_path(&opts.gt_dir, id, "txt"))?)?;
        let pred = parse_label_file(&fs::read_to_string(frame_path(&opts.pred_dir, id, "txt"))?)?;
        // Calibration is parsed for validation; the matching protocol itself
        // runs on label geometry alone.
        parse_calibration(&fs::read_to_string(frame_path(&opts.calib_dir, id, "txt"))?)?;
        Ok(FrameData { gt, pred })
    })?;
    let gts: Vec<Vec<ObjectLabel>> = frames.iter().map(|f| f.gt.clone()).collect();
    let preds: Vec<Vec<ObjectLabel>> = frames.iter().map(|f| f.pred.clone()).collect();

    let mut report: Option<EvalReport> = None;
    for cfg in &configs {
        let partial = evaluate(&gts, &preds, cfg)?;
        match &mut report {
            None => report = Some(partial),
            Some(total) => total.merge(partial)?,
        }
    }
    let report = report.expect("at least one metric");

    print_report_table(&report);
    if let Some(out) = &opts.out {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        write_atomic(out, &json)?;
    }
    if let Some(dir) = &opts.pr_csv_dir {
        for (metric, metric_report) in &report.metrics {
            for difficulty in Difficulty::ALL {
                let mut csv = String::from("# schema: mono3d.pr.v1\nrecall,precision\n");
                for p in metric_report.pr_curves.get(difficulty) {
                    writeln!(csv, "{},{}", p.recall, p.precision)
                        .expect("string write");
                }
                write_atomic(&dir.join(format!("pr_{metric}_{difficulty}.csv")), &csv)?;
            }
        }
    }
    Ok(())
}

fn print_report_table(report: &EvalReport) {
    println!(
        "class {}, IoU threshold {:.2}, 11-point interpolated AP",
        report.class_name, report.iou_threshold
    );
    println!("{:<8} {:>10} {:>10} {:>10}", "metric", "easy", "moderate", "hard");
    for (metric, metric_report) in &report.metrics {
        println!(
            "{:<8} {:>10.4} {:>10.4} {:>10.4}",
            metric.to_string(),
            metric_report.ap.easy,
            metric_report.ap.moderate,
            metric_report.ap.hard
        );
    }
}

// ---------------------------------------------------------------------------
// codec-table
// ---------------------------------------------------------------------------

fn cmd_codec_table(opts: CodecTableOpts) -> CliResult {
    let mut csv = String::from("# schema: mono3d.bins.v1\nindex,lo,hi,width\n");
    match opts.codec.depth_codec()? {
        DepthCodec::Ordinal(cfg) => {
            for row in cfg.bin_table() {
                writeln!(csv, "{},{},{},{}", row.index, row.lo, row.hi, row.width)
                    .expect("string write");
            }
        }
        DepthCodec::DepJoint(cfg) => {
            let (b1, b2) = cfg.bins();
            for (i, b) in [b1, b2].into_iter().enumerate() {
                writeln!(csv, "{},{},{},{}", i, b.lo, b.hi, b.hi - b.lo).expect("string write");
            }
        }
        DepthCodec::Eigen => {
            return Err(CliError::Input(
                "the eigen codec has no bins; choose sid, lid, or depjoint".into(),
            ));
        }
    }
    write_atomic(&opts.out, &csv)
}

// ---------------------------------------------------------------------------
// depth-hist
// ---------------------------------------------------------------------------

fn cmd_depth_hist(opts: DepthHistOpts) -> CliResult {
    if !(opts.bin_width > 0.0 && opts.bin_width.is_finite()) {
        return Err(CliError::Input(format!(
            "bin width must be positive, got {}",
            opts.bin_width
        )));
    }
    let split = load_split(&opts.label_dir, &opts.split)?;
    let mut counts: Vec<u64> = Vec::new();
    for &id in split.ids() {
        let labels =
            parse_label_file(&fs::read_to_string(frame_path(&opts.label_dir, id, "txt"))?)?;
        for label in labels {
            if label.class_name != opts.class {
                continue;
            }
            let bin = (label.location.z / opts.bin_width).floor().max(0.0) as usize;
            if counts.len() <= bin {
                counts.resize(bin + 1, 0);
            }
            counts[bin] += 1;
        }
    }
    let mut csv = String::from("# schema: mono3d.depth_hist.v1\nbin_lo,bin_hi,count\n");
    for (i, count) in counts.iter().enumerate() {
        writeln!(
            csv,
            "{},{},{count}",
            i as f64 * opts.bin_width,
            (i + 1) as f64 * opts.bin_width
        )
        .expect("string write");
    }
    write_atomic(&opts.out, &csv)
}

// ---------------------------------------------------------------------------
// codec-roundtrip
// ---------------------------------------------------------------------------

fn cmd_codec_roundtrip(opts: CodecRoundtripOpts) -> CliResult {
    if opts.samples < 2 {
        return Err(CliError::Input("need at least 2 samples".into()));
    }
    let sid = DiscretizationConfig::new(
        opts.d_min,
        opts.d_max,
        opts.xi,
        opts.bins,
        Discretization::Sid,
    )
    .map_err(CliError::input)?;
    let lid = DiscretizationConfig::new(
        opts.d_min,
        opts.d_max,
        opts.xi,
        opts.bins,
        Discretization::Lid,
    )
    .map_err(CliError::input)?;

    // Midpoint-of-bin decoding (no residual) vs full decoding with the
    // regressed residual.
    let errors = |cfg: &DiscretizationConfig<f64>, d: f64| -> CliResult<(f64, f64)> {
        let enc = cfg.encode(d)?;
        let (lo, hi) = cfg.bin_bounds(enc.bin.min(cfg.bins - 1))?;
        let median_err = ((lo + hi) / 2.0 - d).abs();
        let full_err = (cfg.decode(enc.continuous())? - d).abs();
        Ok((median_err, full_err))
    };

    let mut csv = String::from(
        "# schema: mono3d.codec_roundtrip.v1\ndepth,sid_median_err,sid_full_err,lid_median_err,lid_full_err\n",
    );
    for i in 0..opts.samples {
        let d = sid.d_min()
            + (sid.d_max() - sid.d_min()) * i as f64 / (opts.samples - 1) as f64;
        let (sid_median, sid_full) = errors(&sid, d)?;
        let (lid_median, lid_full) = errors(&lid, d)?;
        writeln!(csv, "{d},{sid_median},{sid_full},{lid_median},{lid_full}")
            .expect("string write");
    }
    write_atomic(&opts.out, &csv)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn cmd_synth(opts: SynthOpts) -> CliResult {
    let spec = SceneSpec {
        seed: opts.seed,
        n_objects: (opts.objects_min, opts.objects_max),
        depth_range: (opts.depth_min, opts.depth_max),
        lateral_range: (opts.lateral_min, opts.lateral_max),
        ..SceneSpec::default()
    };
    let noise = NoiseModel {
        center_px_sigma: opts.noise_center_px,
        depth_rel_sigma: opts.noise_depth_rel,
        yaw_sigma: opts.noise_yaw,
        dim_rel_sigma: opts.noise_dim_rel,
        fp_rate: opts.fp_rate,
        fn_rate: opts.fn_rate,
    };
    let codec = opts.codec.depth_codec()?;
    let meta = FeatureGridMeta::new(
        spec.calib.image_width,
        spec.calib.image_height,
        opts.stride,
    )
    .map_err(CliError::input)?;

    let frames: Vec<u64> = (0..opts.frames).collect();
    parallel_map(frames, opts.jobs, |frame| {
        let scene = generate_scene(&spec, frame)?;
        let id = frame as u32;
        let label_text: String = scene
            .labels
            .iter()
            .map(|l| serialize_label(l) + "\n")
            .collect();
        write_atomic(
            &frame_path(&opts.out_dir.join("label_2"), id, "txt"),
            &label_text,
        )?;
        write_atomic(
            &frame_path(&opts.out_dir.join("calib"), id, "txt"),
            &serialize_calibration(&scene.calib),
        )?;
        if opts.predictions {
            let preds = perturb(
                &scene.labels,
                &scene.calib,
                &noise,
                opts.seed.wrapping_add(frame),
            )?;
            let text: String = preds
                .iter()
                .map(|p| serialize_prediction(p).map(|line| line + "\n"))
                .collect::<Result<_, _>>()?;
            write_atomic(&frame_path(&opts.out_dir.join("pred"), id, "txt"), &text)?;
        }
        if let Some(heads_dir) = &opts.raw_heads_dir {
            let encoded = encode_targets(
                &scene.labels,
                &scene.calib,
                &meta,
                &["Car".to_string()],
                &codec,
                None,
            )?;
            let doc = FrameHeads::new(SplitList::format_id(id), encoded.to_raw_heads());
            write_atomic(&frame_path(heads_dir, id, "json"), &doc.to_json())?;
        }
        Ok(())
    })?;

    let split = SplitList::from_ids((0..opts.frames as u32).collect()).map_err(CliError::input)?;
    write_atomic(&opts.out_dir.join("split.txt"), &split.serialize())?;
    println!(
        "wrote {} frames under {}",
        opts.frames,
        opts.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

fn cmd_decode(opts: DecodeOpts) -> CliResult {
    let codec = opts.codec.depth_codec()?;
    let split = split_from_dir_json(&opts.raw_heads)?;
    if split.is_empty() {
        return Err(CliError::Input(format!(
            "no frame JSON documents under {}",
            opts.raw_heads.display()
        )));
    }
    parallel_map(split.ids().to_vec(), opts.jobs, |id| {
        let heads_path = frame_path(&opts.raw_heads, id, "json");
        let text = fs::read_to_string(&heads_path).map_err(|e| {
            CliError::Input(format!("cannot read {}: {e}", heads_path.display()))
        })?;
        let doc = FrameHeads::from_json(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", heads_path.display())))?;
        let calib_text = fs::read_to_string(frame_path(&opts.calib_dir, id, "txt"))
            .map_err(|e| CliError::Input(format!("missing calibration for {id:06}: {e}")))?;
        let calib: Calibration = parse_calibration(&calib_text)?;
        let meta = FeatureGridMeta::new(calib.image_width, calib.image_height, opts.stride)
            .map_err(CliError::input)?;
        let mut instances = doc.instances;
        if opts.zero_offset3d {
            for inst in &mut instances {
                inst.offset3d = vec![[0.0, 0.0]];
            }
        }
        let decoded = decode_objects(&instances, &calib, &meta, &codec)?;
        let text: String = decoded
            .iter()
            .map(|d| serialize_prediction(&d.label).map(|line| line + "\n"))
            .collect::<Result<_, _>>()?;
        write_atomic(&frame_path(&opts.out_dir, id, "txt"), &text)?;
        Ok(())
    })?;
    println!(
        "decoded {} frames into {}",
        split.len(),
        opts.out_dir.display()
    );
    Ok(())
}

fn split_from_dir_json(dir: &Path) -> CliResult<SplitList> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)
        .map_err(|e| CliError::Input(format!("cannot list {}: {e}", dir.display())))?
    {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if let Ok(id) = stem.parse::<u32>() {
                ids.push(id);
            }
        }
    }
    SplitList::from_ids(ids).map_err(CliError::input)
}
