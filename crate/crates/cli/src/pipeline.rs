//! The simulate, estimate, evaluate and report stages.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use sparse_cps::io::{read_json, read_leadfield, read_time_series, write_atomic, write_leadfield, write_time_series};
use sparse_cps::kron::LeadField;
use sparse_cps::metrics::{evaluate, EvalReport, Part, Quartiles};
use sparse_cps::sim::{coarsen_leadfield, simulate_repetition, synthetic_leadfield, SimulationSpec};
use sparse_cps::spectral::WelchConfig;
use sparse_cps::study::{
    best_evaluation, estimate_one_step, estimate_two_step, prepare_observations, summarize, EstimationConfig,
    Evaluation, Method, StudySetup, StudySummary,
};

use crate::manifest::{
    estimate_file, read_truth, rep_dir, write_record, EstimateRecord, LeadFieldSource, RunManifest, TruthRecord,
    EVALUATIONS_FILE, LEADFIELD_FILE, POSITIONS_FILE, REPORT_DIR,
};

/// External lead field given on the command line.
pub struct LeadFieldInput {
    pub gain: PathBuf,
    pub positions: PathBuf,
}

pub fn simulate(dir: &Path, mut spec: SimulationSpec, input: Option<LeadFieldInput>) -> Result<RunManifest> {
    let start = Instant::now();
    let (fine, source) = match input {
        Some(inp) => {
            let lf = read_leadfield(&inp.gain, Some(&inp.positions))
                .with_context(|| format!("cannot read lead field {}", inp.gain.display()))?;
            spec.n_sensors = lf.n_sensors();
            spec.n_sources_fine = lf.n_sources();
            (lf, LeadFieldSource::File)
        }
        None => (
            synthetic_leadfield(spec.n_sensors, spec.n_sources_fine, spec.seed)?,
            LeadFieldSource::Synthetic,
        ),
    };
    let welch = WelchConfig::with_sampling_rate(spec.sampling_rate);
    spec.validate(&welch)?;

    let mut manifest = RunManifest::new(spec.clone(), source);
    let gain_path = dir.join(LEADFIELD_FILE);
    let positions_path = dir.join(POSITIONS_FILE);
    write_leadfield(&gain_path, Some(&positions_path), &fine).context("cannot write the lead field")?;
    manifest.record(dir, &gain_path);
    manifest.record(dir, &positions_path);

    let written = (0..spec.repetitions)
        .into_par_iter()
        .map(|rep| simulate_one(dir, &spec, &fine, &welch, rep))
        .collect::<Result<Vec<_>>>()?;
    for path in written.iter().flatten() {
        manifest.record(dir, path);
    }
    manifest.timings_seconds.insert("simulate".into(), start.elapsed().as_secs_f64());
    manifest.save(dir)?;
    Ok(manifest)
}

fn simulate_one(
    dir: &Path,
    spec: &SimulationSpec,
    fine: &LeadField,
    welch: &WelchConfig,
    rep: usize,
) -> Result<Vec<PathBuf>> {
    let (truth, observations) =
        simulate_repetition(spec, fine, welch, rep).with_context(|| format!("repetition {rep}"))?;
    let rdir = rep_dir(dir, rep);
    let obs = rdir.join("observations.txt");
    let sources = rdir.join("sources.txt");
    let truth_path = rdir.join("truth.json");
    write_time_series(&obs, &observations)?;
    write_time_series(&sources, &truth.source_series)?;
    let record = TruthRecord {
        repetition: rep,
        configuration: spec.configuration,
        source_indices: truth.source_indices,
        true_pairs: truth.true_pairs.clone(),
        model: truth.model.clone(),
    };
    write_record(&truth_path, &record)?;
    Ok(vec![obs, sources, truth_path])
}

fn load_setup(
    dir: &Path,
    manifest: &RunManifest,
    estimation: EstimationConfig,
    init_seed: Option<u64>,
) -> Result<StudySetup> {
    let mut spec = manifest.spec.clone();
    // Only the initialization streams read the seed after simulation.
    if let Some(seed) = init_seed {
        spec.seed = seed;
    }
    let fine = read_leadfield(&dir.join(LEADFIELD_FILE), Some(&dir.join(POSITIONS_FILE)))
        .context("cannot read the lead field of the run")?;
    let coarse = coarsen_leadfield(&fine, manifest.spec.coarsen_factor)?;
    Ok(StudySetup::from_parts(spec, estimation, fine, coarse)?)
}

/// Estimate files of `method` already present in a repetition directory.
fn existing_estimates(rdir: &Path, method: Method) -> Result<Vec<PathBuf>> {
    if !rdir.is_dir() {
        return Ok(Vec::new());
    }
    let prefix = format!("{}_", method.label());
    let mut found = Vec::new();
    for entry in fs::read_dir(rdir)? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.starts_with(&prefix) && name.ends_with(".json") {
            found.push(path);
        }
    }
    found.sort();
    Ok(found)
}

/// `init_seed` overrides the root seed of the solver initialization streams.
pub fn estimate(
    dir: &Path,
    methods: &[Method],
    estimation: EstimationConfig,
    init_seed: Option<u64>,
) -> Result<RunManifest> {
    let start = Instant::now();
    let mut manifest = RunManifest::load(dir)?;
    let setup = load_setup(dir, &manifest, estimation, init_seed)?;
    let reps = manifest.spec.repetitions;

    let written = (0..reps)
        .into_par_iter()
        .map(|rep| estimate_one(dir, &setup, methods, rep))
        .collect::<Result<Vec<_>>>()?;

    // Grid files from an earlier, larger grid would otherwise linger.
    for rep in 0..reps {
        for &method in methods {
            for stale in existing_estimates(&rep_dir(dir, rep), method)? {
                if !written.iter().flatten().any(|w| w == &stale) {
                    fs::remove_file(&stale)?;
                }
            }
        }
    }
    manifest.files.retain(|f| !methods.iter().any(|m| is_estimate_of(f, *m)));
    for path in written.iter().flatten() {
        manifest.record(dir, path);
    }
    manifest.estimation = Some(setup.estimation.clone());
    manifest.estimation_seed = setup.spec.seed;
    let stage = methods.iter().map(|m| m.label()).collect::<Vec<_>>().join("+");
    manifest
        .timings_seconds
        .insert(format!("estimate:{stage}"), start.elapsed().as_secs_f64());
    manifest.save(dir)?;
    Ok(manifest)
}

fn is_estimate_of(file: &str, method: Method) -> bool {
    Path::new(file)
        .file_name()
        .map(|n| n.to_string_lossy().starts_with(&format!("{}_", method.label())))
        .unwrap_or(false)
}

fn estimate_one(dir: &Path, setup: &StudySetup, methods: &[Method], rep: usize) -> Result<Vec<PathBuf>> {
    let obs_path = rep_dir(dir, rep).join("observations.txt");
    let observations =
        read_time_series(&obs_path).with_context(|| format!("cannot read {}", obs_path.display()))?;
    let data = prepare_observations(&observations, &setup.estimation)
        .with_context(|| format!("repetition {rep}: spectral preparation failed"))?;
    let mut written = Vec::new();
    for &method in methods {
        let estimates = match method {
            Method::OneStep => estimate_one_step(
                &setup.operator,
                setup.lipschitz,
                &data.sensor_spectrum,
                &setup.estimation,
                setup.init_seed(rep),
            ),
            Method::TwoStep => estimate_two_step(&setup.tikhonov, &data.observations, data.frequency_bin, &setup.estimation),
        }
        .with_context(|| format!("repetition {rep}: {} estimation failed", method.label()))?;
        for e in estimates {
            let path = estimate_file(dir, rep, method, e.grid_index);
            let record = EstimateRecord {
                repetition: rep,
                method,
                grid_index: e.grid_index,
                scale: e.scale,
                lambda: e.lambda,
                frequency_bin: data.frequency_bin,
                iterations: e.iterations,
                converged: e.converged,
                spectrum: (&e.spectrum).into(),
            };
            write_record(&path, &record)?;
            written.push(path);
        }
    }
    Ok(written)
}

const EVALUATION_HEADER: &str = "repetition\tmethod\tgrid_index\tscale\tlambda\titerations\tconverged\t\
                                 err_re\terr_im\tcount_re\tcount_im\tnonnull_re\tnonnull_im";

pub fn format_evaluations(rows: &[Evaluation]) -> String {
    let mut out = String::from(EVALUATION_HEADER);
    out.push('\n');
    for e in rows {
        let r = &e.report;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.repetition,
            e.method.label(),
            e.grid_index,
            e.scale,
            e.lambda,
            e.iterations,
            e.converged,
            r.err_re,
            r.err_im,
            r.count_re,
            r.count_im,
            r.has_nonnull_re,
            r.has_nonnull_im
        );
    }
    out
}

pub fn parse_evaluations(text: &str) -> Result<Vec<Evaluation>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header == EVALUATION_HEADER => {}
        _ => bail!("evaluations table must start with the header `{EVALUATION_HEADER}`"),
    }
    lines
        .map(|(no, line)| parse_evaluation_row(line).with_context(|| format!("evaluations line {}", no + 1)))
        .collect()
}

fn parse_evaluation_row(line: &str) -> Result<Evaluation> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 13 {
        bail!("expected 13 fields, found {}", f.len());
    }
    Ok(Evaluation {
        repetition: f[0].parse()?,
        method: Method::parse(f[1])?,
        grid_index: f[2].parse()?,
        scale: f[3].parse()?,
        lambda: f[4].parse()?,
        iterations: f[5].parse()?,
        converged: f[6].parse()?,
        report: EvalReport {
            err_re: f[7].parse()?,
            err_im: f[8].parse()?,
            count_re: f[9].parse()?,
            count_im: f[10].parse()?,
            has_nonnull_re: f[11].parse()?,
            has_nonnull_im: f[12].parse()?,
        },
    })
}

pub fn evaluate_run(dir: &Path, fraction: f64) -> Result<(RunManifest, Vec<Evaluation>)> {
    let start = Instant::now();
    let mut manifest = RunManifest::load(dir)?;
    let fine = read_leadfield(&dir.join(LEADFIELD_FILE), Some(&dir.join(POSITIONS_FILE)))?;
    let coarse = coarsen_leadfield(&fine, manifest.spec.coarsen_factor)?;
    let positions_fine = fine.positions().context("the run's lead field has no positions")?;
    let positions_coarse = coarse.lead_field.positions().context("the coarse lead field has no positions")?;

    let per_rep = (0..manifest.spec.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Evaluation>> {
            let truth = read_truth(dir, rep)?;
            let mut rows = Vec::new();
            for method in Method::BOTH {
                for path in existing_estimates(&rep_dir(dir, rep), method)? {
                    let record: EstimateRecord =
                        read_json(&path).with_context(|| format!("cannot read {}", path.display()))?;
                    let spectrum = record.spectrum.to_cross_spectrum()?;
                    let report = evaluate(&spectrum, &truth.true_pairs, positions_fine, positions_coarse, fraction)
                        .with_context(|| format!("cannot evaluate {}", path.display()))?;
                    rows.push(Evaluation {
                        repetition: rep,
                        method,
                        grid_index: record.grid_index,
                        scale: record.scale,
                        lambda: record.lambda,
                        iterations: record.iterations,
                        converged: record.converged,
                        report,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Evaluation> = per_rep.into_iter().flatten().collect();
    if rows.is_empty() {
        bail!("no estimate files found under {}; run `estimate` first", dir.display());
    }
    let path = dir.join(EVALUATIONS_FILE);
    write_atomic(&path, format_evaluations(&rows).as_bytes())?;
    manifest.record(dir, &path);
    manifest.timings_seconds.insert("evaluate".into(), start.elapsed().as_secs_f64());
    manifest.save(dir)?;
    Ok((manifest, rows))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

pub fn format_table1(summary: &StudySummary) -> String {
    let mut out = String::from("configuration\tlambda_scale\tpart\tnonnull_percent\tcount_min\tcount_max\tmean_count\n");
    for part in Part::BOTH {
        for row in summary.sparsity_by_scale(part) {
            let s = &row.stats;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                row.configuration,
                row.lambda_scale,
                part.label(),
                s.nonnull_percent,
                fmt_opt(s.count_range.map(|r| r.0 as f64)),
                fmt_opt(s.count_range.map(|r| r.1 as f64)),
                fmt_opt(s.mean_count)
            );
        }
    }
    out
}

pub fn format_error_distributions(summary: &StudySummary) -> String {
    let mut out = String::from("method\tquantity\trepetitions\tq1\tmedian\tq3\n");
    for m in &summary.methods {
        let quantities: [(&str, Option<Quartiles>); 5] = [
            ("err_re", m.err_re),
            ("err_im", m.err_im),
            ("count_re", m.count_re),
            ("count_im", m.count_im),
            ("count_total", m.count_total),
        ];
        for (name, q) in quantities {
            let _ = writeln!(
                out,
                "{}\t{name}\t{}\t{}\t{}\t{}",
                m.method.label(),
                m.repetitions,
                fmt_opt(q.map(|q| q.q1)),
                fmt_opt(q.map(|q| q.median)),
                fmt_opt(q.map(|q| q.q3))
            );
        }
    }
    out
}

pub fn format_best(evaluations: &[Evaluation], repetitions: &[usize]) -> String {
    let mut out = String::from("repetition\tmethod\tgrid_index\tscale\tlambda\terr_re\terr_im\tcount_re\tcount_im\n");
    for &rep in repetitions {
        for method in Method::BOTH {
            if let Some(e) = best_evaluation(evaluations, rep, method) {
                let r = e.report;
                let _ = writeln!(
                    out,
                    "{rep}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    method.label(),
                    e.grid_index,
                    e.scale,
                    e.lambda,
                    r.err_re,
                    r.err_im,
                    r.count_re,
                    r.count_im
                );
            }
        }
    }
    out
}

/// Checks the run directory before aggregating: every manifest file exists and
/// every evaluation row refers to a known repetition and an existing estimate.
fn validate_for_report(dir: &Path, manifest: &RunManifest, rows: &[Evaluation]) -> Result<()> {
    let mut offending = manifest.missing_files(dir);
    for e in rows {
        if e.repetition >= manifest.spec.repetitions {
            offending.push(format!(
                "{EVALUATIONS_FILE} (repetition {} outside 0..{})",
                e.repetition, manifest.spec.repetitions
            ));
        }
        let est = estimate_file(dir, e.repetition, e.method, e.grid_index);
        if !est.is_file() {
            offending.push(est.strip_prefix(dir).unwrap_or(&est).display().to_string());
        }
    }
    offending.sort();
    offending.dedup();
    if !offending.is_empty() {
        bail!("inconsistent run directory; offending files:\n  {}", offending.join("\n  "));
    }
    Ok(())
}

pub fn report(dir: &Path) -> Result<StudySummary> {
    let start = Instant::now();
    let mut manifest = RunManifest::load(dir)?;
    let path = dir.join(EVALUATIONS_FILE);
    let text = fs::read_to_string(&path)
        .with_context(|| format!("cannot read {}; run `evaluate` first", path.display()))?;
    let rows = parse_evaluations(&text)?;
    validate_for_report(dir, &manifest, &rows)?;

    let summary = summarize(manifest.spec.configuration.number(), &rows);
    let mut reps: Vec<usize> = rows.iter().map(|e| e.repetition).collect();
    reps.sort_unstable();
    reps.dedup();
    let out = dir.join(REPORT_DIR);
    let files = [
        (out.join("table1.tsv"), format_table1(&summary)),
        (out.join("errors.tsv"), format_error_distributions(&summary)),
        (out.join("best.tsv"), format_best(&rows, &reps)),
        (out.join("summary.json"), sparse_cps::io::to_json_pretty(&summary)?),
    ];
    for (path, contents) in &files {
        write_atomic(path, contents.as_bytes())?;
        manifest.record(dir, path);
    }
    manifest.timings_seconds.insert("report".into(), start.elapsed().as_secs_f64());
    manifest.save(dir)?;
    Ok(summary)
}
