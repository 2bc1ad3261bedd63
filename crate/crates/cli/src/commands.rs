use std::fs;
use std::path::Path;

use log::info;
use serde_json::json;
use triadcal_core::analysis::{
    self, accuracy_summary, decompose_sds, group_compare, pearson_r, variance_decompose, AccuracyAxis, AnalysisReport, ReportEntry,
    ScoreSeries,
};
use triadcal_core::assembly::{parse_plan, sample_subsets, subset_stats, ItemBank, SubsetManifest};
use triadcal_core::irt::{fit_statistics, scree_eigenvalues, standard_error_from_information};
use triadcal_core::schema::{self, BANK_SCHEMA, MODEL_SCHEMA};
use triadcal_core::simulation::{recovery_report, simulate_responses, BetaDistribution, SimulationConfig, ThetaDistribution};
use triadcal_core::triads::{
    build_similarity, build_triads, read_embeddings, read_triads, simulate_algorithm_subject, write_triads, SimilarityMetric, TriadConstraints,
};
use triadcal_core::{
    fit_em, test_information, AbilityMethod, EmConfig, Error, FittedModel, ModelFamily, QuadratureSpec, ResponseMatrix, Result,
};

use crate::cli::{AnalyzeCommand, Axis, FitArgs, Metric, ScoreArgs, SimulateArgs, SubsetArgs, TriadsAuditArgs, TriadsBuildArgs};
use crate::manifest::{manifest_path, Recorder};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn metric(m: Metric) -> SimilarityMetric {
    match m {
        Metric::Cosine => SimilarityMetric::Cosine,
        Metric::NegEuclidean => SimilarityMetric::NegEuclidean,
    }
}

/// Finishes a run: writes the manifest beside `primary` and prints a one-line summary.
fn finish(rec: Recorder, primary: &Path, is_dir: bool, summary: serde_json::Value) -> Result<()> {
    let manifest = rec.finish();
    let path = manifest_path(primary, is_dir);
    manifest.write(&path)?;
    println!("{}", json!({ "command": manifest.command, "outputs": manifest.outputs, "manifest": path.display().to_string(), "summary": summary }));
    Ok(())
}

pub fn triads_build(args: &TriadsBuildArgs, mut rec: Recorder) -> Result<()> {
    rec.input(&args.embeddings)?;
    rec.seed(args.seed);
    let corpus = read_embeddings(&args.embeddings)?;
    let matrix = build_similarity(&corpus, metric(args.metric))?;
    let constraints = TriadConstraints {
        yoke_gender: !args.no_yoke_gender,
        yoke_race: !args.no_yoke_race,
        seed: args.seed,
    };
    let triads = build_triads(&corpus, &matrix, constraints)?;
    write_triads(&args.out, &triads)?;
    rec.output(&args.out);
    info!("built {} triads from {} images", triads.len(), corpus.len());
    finish(rec, &args.out, false, json!({ "n_images": corpus.len(), "n_triads": triads.len() }))
}

pub fn triads_audit(args: &TriadsAuditArgs, mut rec: Recorder) -> Result<()> {
    rec.input(&args.triads)?;
    rec.input(&args.embeddings)?;
    let triads = read_triads(&args.triads)?;
    let corpus = read_embeddings(&args.embeddings)?;
    let matrix = build_similarity(&corpus, metric(args.metric))?;
    let audit = simulate_algorithm_subject(&triads, &matrix)?;
    write_text(&args.out, &schema::to_document(schema::REPORT_SCHEMA, &audit)?)?;
    rec.output(&args.out);
    finish(
        rec,
        &args.out,
        false,
        json!({ "proportion_correct": audit.proportion_correct, "n_triads": audit.n_triads, "n_ties": audit.n_ties }),
    )
}

pub fn fit(args: &FitArgs, mut rec: Recorder) -> Result<()> {
    rec.input(&args.data)?;
    let family: ModelFamily = args.model.parse()?;
    let data = ResponseMatrix::read_csv(&args.data)?;
    let config = EmConfig {
        quadrature: QuadratureSpec::new(args.quadrature.nodes, args.quadrature.lower, args.quadrature.upper)?,
        tol: args.tol,
        max_cycles: args.max_cycles,
    };
    let mut model = fit_em(&data, family, &config)?;
    if !args.no_fit_stats {
        model.fit = Some(fit_statistics(&model, &data)?);
    }
    model.write(&args.out)?;
    rec.output(&args.out);
    finish(
        rec,
        &args.out,
        false,
        json!({
            "family": family,
            "n_subjects": model.n_subjects,
            "n_items": model.items.len(),
            "converged": model.converged,
            "em_cycles": model.em_cycles,
            "log_likelihood": model.log_likelihood,
            "fit": model.fit,
        }),
    )
}

pub fn score(args: &ScoreArgs, mut rec: Recorder) -> Result<()> {
    rec.input(&args.data)?;
    rec.input(&args.model_file)?;
    let method: AbilityMethod = args.method.parse()?;
    let data = ResponseMatrix::read_csv(&args.data)?;
    let model = FittedModel::read(&args.model_file)?;
    let abilities = analysis::project_cohort(&data, &model, method)?;
    let mut out = String::from("subject_id,theta,standard_error,method,flag\n");
    for a in &abilities {
        let flag = a.flag.map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            a.subject_id,
            a.theta,
            a.standard_error,
            serde_json::to_value(a.method)?.as_str().unwrap_or_default(),
            flag.unwrap_or_default()
        ));
    }
    write_text(&args.out, &out)?;
    rec.output(&args.out);
    finish(rec, &args.out, false, json!({ "n_subjects": abilities.len(), "method": method }))
}

/// Reads a bank from either a bank document or a fitted model.
pub fn load_bank(path: &Path) -> Result<ItemBank> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    match schema::schema_of(&text).as_deref() {
        Some(MODEL_SCHEMA) => {
            let model = FittedModel::from_json(&text)?;
            let provenance = format!("model:{}", triadcal_core::assembly::sha256_hex(text.as_bytes()));
            ItemBank::from_model(&model, provenance)
        }
        _ => {
            let bank: ItemBank = schema::from_document(BANK_SCHEMA, &text, &path.display().to_string())?;
            ItemBank::new(bank.provenance, bank.items)
        }
    }
}

pub fn subset(args: &SubsetArgs, mut rec: Recorder) -> Result<()> {
    rec.input(&args.bank)?;
    rec.seed(args.seed);
    let bank = load_bank(&args.bank)?;
    let specs = parse_plan(&args.plan, args.seed)?;
    let forms = sample_subsets(&bank, &specs)?;
    create_dir(&args.out_dir)?;
    let mut summary = Vec::new();
    for (spec, form) in specs.iter().zip(forms) {
        let stats = subset_stats(&form)?;
        let manifest = SubsetManifest::new(spec, &bank, form);
        let path = args.out_dir.join(format!("{}.json", spec.name));
        manifest.write(&path)?;
        rec.output(&path);
        summary.push(json!({ "name": spec.name, "stratum": spec.stratum, "size": spec.size, "mean_beta": stats.mean_beta, "sd_beta": stats.sd_beta }));
    }
    finish(rec, &args.out_dir, true, json!({ "forms": summary }))
}

pub fn simulate(args: &SimulateArgs, mut rec: Recorder) -> Result<()> {
    rec.seed(args.seed);
    let family: ModelFamily = args.family.parse()?;
    let config = SimulationConfig {
        family,
        theta: ThetaDistribution::Normal {
            mean: args.theta_mean,
            sd: args.theta_sd,
        },
        beta: BetaDistribution::Uniform {
            low: args.beta_low,
            high: args.beta_high,
        },
        ..SimulationConfig::rasch(args.subjects, args.items, args.seed)
    };
    let sim = simulate_responses(&config)?;
    create_dir(&args.out_dir)?;
    let responses = args.out_dir.join("responses.csv");
    let truth = args.out_dir.join("truth.json");
    sim.data.write_csv(&responses)?;
    sim.truth.write(&truth)?;
    rec.output(&responses);
    rec.output(&truth);
    let mut summary = json!({ "n_subjects": args.subjects, "n_items": args.items });
    if args.fit {
        let model = fit_em(&sim.data, family, &EmConfig::default())?;
        let abilities = analysis::project_cohort(&sim.data, &model, AbilityMethod::Eap)?;
        let report = recovery_report(&sim.truth, &model, &abilities)?;
        let model_path = args.out_dir.join("model.json");
        let report_path = args.out_dir.join("recovery.json");
        model.write(&model_path)?;
        write_text(&report_path, &schema::to_document(schema::REPORT_SCHEMA, &report)?)?;
        rec.output(&model_path);
        rec.output(&report_path);
        summary["recovery"] = serde_json::to_value(report)?;
        summary["converged"] = json!(model.converged);
    }
    finish(rec, &args.out_dir, true, summary)
}

fn write_report(report: &AnalysisReport, out: &Path, rec: &mut Recorder) -> Result<()> {
    report.write_json(out)?;
    rec.output(out);
    let csv_path = out.with_extension("csv");
    report.write_csv(&csv_path)?;
    rec.output(&csv_path);
    Ok(())
}

pub fn analyze(cmd: &AnalyzeCommand, mut rec: Recorder) -> Result<()> {
    match cmd {
        AnalyzeCommand::Accuracy { data, axis, out } => {
            rec.input(data)?;
            let data = ResponseMatrix::read_csv(data)?;
            let axis = match axis {
                Axis::Subject => AccuracyAxis::BySubject,
                Axis::Item => AccuracyAxis::ByItem,
            };
            let series = accuracy_summary(&data, axis)?;
            series.write_csv(out)?;
            rec.output(out);
            let n = series.len() as f64;
            let mean = series.values.iter().sum::<f64>() / n;
            let min = series.values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = series.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            finish(rec, out, false, json!({ "n": series.len(), "mean": mean, "min": min, "max": max }))
        }
        AnalyzeCommand::FitStats { data, model_file, out } => {
            rec.input(data)?;
            rec.input(model_file)?;
            let model = FittedModel::read(model_file)?;
            let data = ResponseMatrix::read_csv(data)?.select_items(&model.item_ids())?;
            let fit = fit_statistics(&model, &data)?;
            let mut report = AnalysisReport::default();
            report.push(ReportEntry::value("fit", "log_likelihood", fit.log_likelihood));
            report.push(ReportEntry::value("fit", "aic", fit.aic));
            report.push(ReportEntry::value("fit", "bic", fit.bic));
            report.push(ReportEntry::value("fit", "rmsea", fit.rmsea));
            report.push(ReportEntry::value("fit", "m2", fit.m2));
            report.push(ReportEntry::value("fit", "df", fit.df as f64));
            write_report(&report, out, &mut rec)?;
            finish(rec, out, false, serde_json::to_value(fit)?)
        }
        AnalyzeCommand::Scree { data, out } => {
            rec.input(data)?;
            let data = ResponseMatrix::read_csv(data)?;
            let eigenvalues = scree_eigenvalues(&data)?;
            let mut report = AnalysisReport::default();
            for (k, ev) in eigenvalues.iter().enumerate() {
                report.push(ReportEntry::value(format!("component_{}", k + 1), "eigenvalue", *ev));
            }
            write_report(&report, out, &mut rec)?;
            let ratio = if eigenvalues.len() > 1 && eigenvalues[1] > 0.0 {
                Some(eigenvalues[0] / eigenvalues[1])
            } else {
                None
            };
            finish(rec, out, false, json!({ "first": eigenvalues[0], "first_to_second": ratio }))
        }
        AnalyzeCommand::Info {
            model_file,
            form,
            lower,
            upper,
            points,
            out,
        } => {
            rec.input(model_file)?;
            let model = FittedModel::read(model_file)?;
            let items = match form {
                Some(path) => {
                    rec.input(path)?;
                    let manifest = SubsetManifest::read(path)?;
                    manifest
                        .bank
                        .items
                        .iter()
                        .map(|i| model.item(&i.item_id).cloned().ok_or_else(|| Error::UnknownItem(i.item_id.clone())))
                        .collect::<Result<Vec<_>>>()?
                }
                None => model.items.clone(),
            };
            if *points < 2 || !lower.is_finite() || !upper.is_finite() || lower >= upper {
                return Err(Error::InvalidInput("need at least 2 points on a non-empty range".into()));
            }
            let mut text = String::from("theta,information,standard_error\n");
            let (mut peak_theta, mut peak_info) = (f64::NAN, f64::NEG_INFINITY);
            for k in 0..*points {
                let theta = lower + (upper - lower) * k as f64 / (*points - 1) as f64;
                let information = test_information(theta, &items)?;
                let se = standard_error_from_information(theta, information)?;
                if information > peak_info {
                    (peak_theta, peak_info) = (theta, information);
                }
                text.push_str(&format!("{theta},{information},{se}\n"));
            }
            write_text(out, &text)?;
            rec.output(out);
            finish(rec, out, false, json!({ "n_items": items.len(), "peak_theta": peak_theta, "peak_information": peak_info }))
        }
        AnalyzeCommand::Correlate { a, b, out } => {
            rec.input(a)?;
            rec.input(b)?;
            let c = pearson_r(&ScoreSeries::read_csv(a)?, &ScoreSeries::read_csv(b)?)?;
            let mut report = AnalysisReport::default();
            report.push_correlation("correlation", &c);
            write_report(&report, out, &mut rec)?;
            finish(rec, out, false, serde_json::to_value(c)?)
        }
        AnalyzeCommand::Compare { a, b, test, out } => {
            rec.input(a)?;
            rec.input(b)?;
            let c = group_compare(&ScoreSeries::read_csv(a)?, &ScoreSeries::read_csv(b)?, test.parse()?)?;
            let mut report = AnalysisReport::default();
            report.push_comparison("comparison", &c);
            write_report(&report, out, &mut rec)?;
            finish(rec, out, false, serde_json::to_value(c)?)
        }
        AnalyzeCommand::Variance {
            cross,
            same,
            sd_session_and_test,
            sd_test_only,
            out,
        } => {
            let d = match (cross, same, sd_session_and_test, sd_test_only) {
                (Some(cross), Some(same), None, _) => {
                    rec.input(cross)?;
                    rec.input(same)?;
                    variance_decompose(&ScoreSeries::read_csv(cross)?.values, &ScoreSeries::read_csv(same)?.values)?
                }
                (None, None, Some(combined), Some(test_only)) => decompose_sds(*combined, *test_only)?,
                _ => {
                    return Err(Error::InvalidInput(
                        "give either --cross and --same, or --sd-session-and-test and --sd-test-only".into(),
                    ))
                }
            };
            let mut report = AnalysisReport::default();
            report.push_variance("variance", &d);
            write_report(&report, out, &mut rec)?;
            finish(rec, out, false, serde_json::to_value(d)?)
        }
    }
}
