use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use wgom::evaluation::{hamming_error_with, AlignmentStrategy};
use wgom::io::{self, format_value, prune_empty, read_dense_csv, read_responses, write_dense_csv, write_index_file};
use wgom::{
    data_sparsity, profile_memberships, relative_error, run_experiment, sample_response,
    DMatrix, ExperimentSpec, MembershipMatrix, Method, ProfileThresholds, ResponseMatrix,
    SimulationConfig, WgomError,
};

use crate::failure::Failure;
use crate::{Cli, OutputFormat};

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<(T, String), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::config(path.display(), e))?;
    let value: T =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{what} {}", path.display()), e))?;
    Ok((value, text))
}

/// Errors from validating or instantiating a config are config errors
/// unless they are numerical.
fn config_stage(err: WgomError) -> Failure {
    if err.is_numerical() {
        Failure::Numerical(err.to_string())
    } else {
        Failure::Config(err.to_string())
    }
}

fn out_dir(cli: &Cli) -> Result<&Path, Failure> {
    let dir = cli
        .out
        .as_deref()
        .ok_or_else(|| Failure::Config("this command needs --out <dir>".into()))?;
    fs::create_dir_all(dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes a single document to `<out>/<stem>.<ext>`, or to stdout.
fn emit<T: Serialize>(cli: &Cli, stem: &str, value: &T, csv: String) -> Result<(), Failure> {
    let (ext, body) = match cli.format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
            s.push('\n');
            ("json", s)
        }
        OutputFormat::Csv => ("csv", csv),
    };
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{stem}.{ext}")), body)?;
        }
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

struct Loaded {
    responses: ResponseMatrix,
    sha256: String,
    kept: Option<(Vec<usize>, Vec<usize>)>,
}

fn load_responses(cli: &Cli, path: &Path) -> Result<Loaded, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let responses = read_responses(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let sha256 = sha256_hex(&bytes);
    if cli.prune {
        let pruned = prune_empty(&responses)?;
        eprintln!(
            "pruned to {} subjects and {} items",
            pruned.kept_subjects.len(),
            pruned.kept_items.len()
        );
        return Ok(Loaded {
            responses: pruned.responses,
            sha256,
            kept: Some((pruned.kept_subjects, pruned.kept_items)),
        });
    }
    Ok(Loaded { responses, sha256, kept: None })
}

fn read_matrix_data(path: &Path) -> Result<DMatrix<f64>, Failure> {
    io::read_matrix(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn read_membership(path: &Path) -> Result<MembershipMatrix, Failure> {
    let m = read_dense_csv(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    MembershipMatrix::new(m).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub fn generate(cli: &Cli, config_path: &Path) -> Result<(), Failure> {
    let (config, _): (SimulationConfig, _) = read_json(config_path, "simulation config")?;
    config.validate().map_err(config_stage)?;
    let seed = cli.seed.unwrap_or(0);
    let spec = config.build_spec(seed).map_err(config_stage)?;
    let (responses, diagnostics) = sample_response(&spec, seed).map_err(config_stage)?;

    let dir = out_dir(cli)?;
    write_dense_csv(&dir.join("responses.csv"), responses.values())?;
    write_dense_csv(&dir.join("membership.csv"), spec.membership.as_matrix())?;
    write_dense_csv(&dir.join("item_params.csv"), spec.item_params.values())?;
    write_dense_csv(&dir.join("expected.csv"), &wgom::expected_responses(&spec))?;

    let canonical = serde_json::to_vec(&config).map_err(|e| Failure::Data(e.to_string()))?;
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": "generate",
            "seed": seed,
            "spec_sha256": sha256_hex(&canonical),
            "config": config,
            "diagnostics": diagnostics,
            "files": {
                "responses": "responses.csv",
                "membership": "membership.csv",
                "item_params": "item_params.csv",
                "expected": "expected.csv",
            },
        }),
    )
}

pub fn estimate(cli: &Cli, matrix: &Path, k: usize, method: Method) -> Result<(), Failure> {
    let loaded = load_responses(cli, matrix)?;
    let seed = cli.seed.unwrap_or(0);
    let start = Instant::now();
    let fit = wgom::estimation::estimate(method, &loaded.responses, k, &wgom::SvdOptions::with_seed(seed))?;
    let runtime = start.elapsed().as_secs_f64();

    let dir = out_dir(cli)?;
    write_dense_csv(&dir.join("membership.csv"), fit.membership_hat.as_matrix())?;
    write_dense_csv(&dir.join("item_params.csv"), &fit.item_params_hat)?;
    // Vertex indices refer to rows of the input file, even after pruning.
    let pure: Vec<usize> = match &loaded.kept {
        Some((subjects, _)) => fit.pure_index_set.iter().map(|&i| subjects[i]).collect(),
        None => fit.pure_index_set.clone(),
    };
    write_index_file(&dir.join("pure_indices.txt"), &pure)?;
    if !fit.singular_values.is_empty() {
        let sv = DMatrix::from_column_slice(fit.singular_values.len(), 1, &fit.singular_values);
        write_dense_csv(&dir.join("singular_values.csv"), &sv)?;
    }
    if let Some((subjects, items)) = &loaded.kept {
        write_index_file(&dir.join("kept_subjects.txt"), subjects)?;
        write_index_file(&dir.join("kept_items.txt"), items)?;
    }
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": "estimate",
            "method": method,
            "k": k,
            "seed": seed,
            "input": matrix.display().to_string(),
            "input_sha256": loaded.sha256,
            "pruned": cli.prune,
            "n_subjects": loaded.responses.n_subjects(),
            "n_items": loaded.responses.n_items(),
            "runtime_seconds": runtime,
            "zero_row_fallbacks": fit.zero_row_fallbacks,
            "pseudo_inverse_used": fit.pseudo_inverse_used,
        }),
    )
}

pub fn select_k(cli: &Cli, matrix: &Path, method: Method) -> Result<(), Failure> {
    let loaded = load_responses(cli, matrix)?;
    let r = &loaded.responses;
    let cap = r.n_subjects().min(r.n_items());
    let k_max = if cli.k_max > cap {
        eprintln!("k-max {} exceeds min(N, J) = {cap}; using {cap}", cli.k_max);
        cap
    } else {
        cli.k_max
    };
    let selection = wgom::select_k(r, method, k_max, cli.seed.unwrap_or(0))?;
    let mut csv = String::from("k,modularity,selected\n");
    for point in &selection.curve {
        let q = point.modularity.map_or_else(|| "NaN".to_string(), format_value);
        csv.push_str(&format!("{},{q},{}\n", point.k, u8::from(point.k == selection.k_hat)));
    }
    emit(cli, "select_k", &selection, csv)
}

pub fn experiment(cli: &Cli, spec_path: &Path) -> Result<(), Failure> {
    let (mut spec, _): (ExperimentSpec, _) = read_json(spec_path, "experiment spec")?;
    if let Some(r) = cli.replicates {
        spec.replicates = r;
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    spec.validate().map_err(config_stage)?;
    let dir = out_dir(cli)?;
    let results = run_experiment(&spec).map_err(config_stage)?;

    let mut csv = format!(
        "{},mean_hamming_error,mean_relative_error,mean_runtime_seconds,accuracy_rate\n",
        spec.family.parameter_name()
    );
    for row in &results {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            format_value(row.value),
            format_value(row.mean_hamming_error),
            format_value(row.mean_relative_error),
            format_value(row.mean_runtime_seconds),
            format_value(row.accuracy_rate),
        ));
    }
    fs::write(dir.join("results.csv"), csv)?;
    if cli.format == OutputFormat::Json {
        write_json(&dir.join("results.json"), &results)?;
    }

    let errors: Vec<_> = results
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| json!({ "value": r.value, "error": e })))
        .collect();
    for e in &errors {
        eprintln!("grid point {}: {}", e["value"], e["error"]);
    }
    let canonical = serde_json::to_vec(&spec).map_err(|e| Failure::Data(e.to_string()))?;
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": "experiment",
            "seed": spec.seed,
            "spec_sha256": sha256_hex(&canonical),
            "spec": spec,
            "grid_errors": errors,
            "files": { "results": "results.csv" },
        }),
    )
}

pub fn parse_thresholds(text: &str) -> Result<ProfileThresholds, Failure> {
    let bad = || Failure::Config(format!("--thresholds expects `<mixed>,<pure>`, got `{text}`"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let mixed: f64 = a.trim().parse().map_err(|_| bad())?;
    let pure: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(0.0..=1.0).contains(&mixed) || !(0.0..=1.0).contains(&pure) {
        return Err(bad());
    }
    Ok(ProfileThresholds { mixed, pure })
}

pub fn profile(cli: &Cli, membership: &Path, responses: Option<&Path>) -> Result<(), Failure> {
    let thresholds = parse_thresholds(&cli.thresholds)?;
    let pi = read_membership(membership)?;
    let p = profile_memberships(&pi, thresholds);
    let xi = match responses {
        Some(path) => Some(data_sparsity(&load_responses(cli, path)?.responses)),
        None => None,
    };
    let value = json!({
        "omega_mixed": p.omega_mixed,
        "omega_pure": p.omega_pure,
        "eta": p.eta,
        "xi": xi,
        "thresholds": thresholds,
    });
    let mut csv = String::from("omega_mixed,omega_pure,eta,xi\n");
    csv.push_str(&format!(
        "{},{},{},{}\n",
        format_value(p.omega_mixed),
        format_value(p.omega_pure),
        format_value(p.eta),
        xi.map_or_else(String::new, format_value)
    ));
    emit(cli, "profile", &value, csv)
}

pub fn evaluate(
    cli: &Cli,
    membership: &Path,
    true_membership: &Path,
    items: Option<(&Path, &Path)>,
) -> Result<(), Failure> {
    let pi_hat = read_membership(membership)?;
    let pi = read_membership(true_membership)?;
    let hamming = hamming_error_with(pi_hat.as_matrix(), pi.as_matrix(), AlignmentStrategy::Auto)?;
    let relative = match items {
        Some((est, truth)) => Some(relative_error(&read_matrix_data(est)?, &read_matrix_data(truth)?)?),
        None => None,
    };
    let value = json!({ "hamming_error": hamming, "relative_error": relative });
    let csv = format!(
        "hamming_error,relative_error\n{},{}\n",
        format_value(hamming),
        relative.map_or_else(String::new, format_value)
    );
    emit(cli, "evaluation", &value, csv)
}
