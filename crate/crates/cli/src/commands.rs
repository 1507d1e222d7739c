//! Pipeline stages behind the CLI subcommands. Each stage reads its inputs
//! from the experiment layout under `output_dir` and emits its artifacts
//! into versioned directories with a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use emdm::emloop::em_run;
use emdm::numkit::{derive_seed, Rng, Tensor};
use emdm::operators::{make_gaussian_kernel, make_random_mask, MeasurementOperator, OperatorSpec};
use emdm::oracles::{psnr, sliced_wasserstein};
use emdm::samplers::{posterior_batch, sample_dps, sample_unconditional, Measurement};
use emdm::schedule::NoiseSchedule;
use emdm::scorenet::{load_model, save_model, ScoreModel};

use crate::artifacts::RunDir;
use crate::config::ExperimentConfig;
use crate::data::{generate_dataset, item_seed, read_csv_rows, write_csv_rows};
use crate::pgm::{montage_row, montage_stack, read_pgm, write_pgm};
use crate::{CliError, CliResult};

/// Sidecar describing how measurements were produced; enough to rebuild
/// every likelihood gradient exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementMeta {
    pub operator: OperatorSpec,
    pub n: usize,
    pub dim: usize,
    pub image_size: Option<usize>,
    pub items: Vec<MeasurementItemMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementItemMeta {
    pub id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_seed: Option<u64>,
}

/// Generate and write the clean dataset.
pub fn cmd_make_data(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let dir = cfg.data_dir();
    fs::create_dir_all(&dir)?;
    let rows = generate_dataset(&cfg.dataset, cfg.seed)?;
    if let Some(size) = cfg.dataset.image_size() {
        let (n, _) = rows.as_matrix().map_err(CliError::Core)?;
        for i in 0..n {
            let img = rows.row_tensor(i).map_err(CliError::Core)?;
            write_pgm(&dir.join(format!("img_{:05}.pgm", i)), &img, size, size)?;
        }
    } else {
        write_csv_rows(&dir.join("clean.csv"), &rows)?;
    }
    fs::write(
        dir.join("dataset.json"),
        serde_json::to_string_pretty(&cfg.dataset).expect("serializable"),
    )?;
    Ok(dir)
}

/// Read the clean dataset back as `[n, d]` rows.
pub fn load_clean_data(cfg: &ExperimentConfig) -> CliResult<Tensor> {
    let dir = cfg.data_dir();
    if let Some(size) = cfg.dataset.image_size() {
        let mut rows = Vec::with_capacity(cfg.dataset.n());
        for i in 0..cfg.dataset.n() {
            let (img, h, w) = read_pgm(&dir.join(format!("img_{:05}.pgm", i)))?;
            if (h, w) != (size, size) {
                return Err(CliError::Other(format!(
                    "image {} is {}x{}, expected {}x{}",
                    i, h, w, size, size
                )));
            }
            rows.push(img);
        }
        Ok(Tensor::stack_rows(&rows).map_err(CliError::Core)?)
    } else {
        read_csv_rows(&dir.join("clean.csv"))
    }
}

/// Build the forward model for one measurement from the operator spec.
pub fn operator_for_item(
    spec: &OperatorSpec,
    dim: usize,
    image_size: Option<usize>,
    id: u64,
) -> CliResult<(MeasurementOperator, Option<u64>)> {
    match spec {
        OperatorSpec::Awgn { noise_std } => {
            Ok((MeasurementOperator::awgn(*noise_std).map_err(CliError::Core)?, None))
        }
        OperatorSpec::Inpaint {
            noise_std,
            keep_fraction,
            mask_seed,
        } => {
            let per_item = derive_seed(*mask_seed, id);
            let mask = make_random_mask(
                &[dim],
                *keep_fraction,
                &mut Rng::from_seed(per_item),
            )
            .map_err(CliError::Core)?;
            Ok((
                MeasurementOperator::inpaint(mask, *noise_std).map_err(CliError::Core)?,
                Some(per_item),
            ))
        }
        OperatorSpec::Blur {
            noise_std,
            kernel_size,
            kernel_std,
        } => {
            let size = image_size.ok_or_else(|| {
                CliError::config("blur operator requires an image dataset")
            })?;
            let kernel =
                make_gaussian_kernel(*kernel_size, *kernel_std).map_err(CliError::Core)?;
            Ok((
                MeasurementOperator::blur(kernel, size, size, *noise_std)
                    .map_err(CliError::Core)?,
                None,
            ))
        }
    }
}

/// Corrupt the clean dataset into measurements plus a reconstruction
/// sidecar. Per-item noise and masks are seeded by `(seed, id)`.
pub fn cmd_corrupt(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let clean = load_clean_data(cfg)
        .map_err(|e| CliError::stage("corrupt inputs", e))?;
    let (n, dim) = clean.as_matrix().map_err(CliError::Core)?;
    let dir = cfg.measurements_dir();
    fs::create_dir_all(&dir)?;
    let mut items = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let id = i as u64;
        let (op, mask_seed) =
            operator_for_item(&cfg.operator, dim, cfg.dataset.image_size(), id)?;
        let x = clean.row_tensor(i).map_err(CliError::Core)?;
        let mut rng = Rng::from_seed(item_seed(cfg.seed, id));
        let y = op.apply(&x, &mut rng).map_err(CliError::Core)?;
        rows.push(y);
        items.push(MeasurementItemMeta { id, mask_seed });
    }
    let matrix = Tensor::stack_rows(&rows).map_err(CliError::Core)?;
    write_csv_rows(&dir.join("measurements.csv"), &matrix)?;
    let meta = MeasurementMeta {
        operator: cfg.operator.clone(),
        n,
        dim,
        image_size: cfg.dataset.image_size(),
        items,
    };
    fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&meta).expect("serializable"),
    )?;
    Ok(dir)
}

/// Load measurements and rebuild their operators from the sidecar.
pub fn load_measurements(cfg: &ExperimentConfig) -> CliResult<(Vec<Measurement>, MeasurementMeta)> {
    let dir = cfg.measurements_dir();
    let meta_text = fs::read_to_string(dir.join("meta.json"))?;
    let meta: MeasurementMeta = serde_json::from_str(&meta_text)
        .map_err(|e| CliError::Other(format!("bad meta.json: {}", e)))?;
    let matrix = read_csv_rows(&dir.join("measurements.csv"))?;
    let (n, dim) = matrix.as_matrix().map_err(CliError::Core)?;
    if n != meta.n || dim != meta.dim {
        return Err(CliError::Other(format!(
            "measurements.csv is {}x{}, meta says {}x{}",
            n, dim, meta.n, meta.dim
        )));
    }
    let mut out = Vec::with_capacity(n);
    for item in &meta.items {
        let (op, _) = operator_for_item(&meta.operator, dim, meta.image_size, item.id)?;
        let y = matrix.row_tensor(item.id as usize).map_err(CliError::Core)?;
        out.push(Measurement::new(item.id, y, op));
    }
    Ok((out, meta))
}

fn format_metric(v: f64) -> String {
    format!("{}", v)
}

/// Pretrain, run the EM loop, and emit per-iteration metrics, checkpoints,
/// and montages.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let clean = load_clean_data(cfg)
        .map_err(|e| CliError::stage("clean-data inputs", e))?;
    let (mut measurements, meta) = load_measurements(cfg)
        .map_err(|e| CliError::stage("E-step inputs", e))?;
    let truths: Vec<Tensor> = (0..clean.as_matrix().map_err(CliError::Core)?.0)
        .map(|i| clean.row_tensor(i).map_err(CliError::Core))
        .collect::<CliResult<_>>()?;

    // Clean pretraining subset, chosen from the clean pool by seed.
    let (n_clean, _) = clean.as_matrix().map_err(CliError::Core)?;
    let take = cfg.em.n_init_clean.min(n_clean);
    let mut subset_rng = Rng::derive(cfg.seed, 0x5EED);
    let subset_rows: Vec<Tensor> = subset_rng
        .choose_indices(n_clean, take)
        .into_iter()
        .map(|i| clean.row_tensor(i).map_err(CliError::Core))
        .collect::<CliResult<_>>()?;
    let clean_subset = Tensor::stack_rows(&subset_rows).map_err(CliError::Core)?;

    // Masked pixels start from the clean-pool mean instead of zero.
    if matches!(cfg.operator, OperatorSpec::Inpaint { .. }) {
        let fill = clean.mean();
        for m in &mut measurements {
            let mask = m.op.mask().expect("inpaint operator").clone();
            let mut init = m.op.adjoint(&m.y).map_err(CliError::Core)?;
            for (v, &kept) in init.data_mut().iter_mut().zip(mask.data()) {
                if kept == 0.0 {
                    *v = fill;
                }
            }
            m.x_init = Some(init);
        }
    }

    let sched = NoiseSchedule::from_config(&cfg.schedule).map_err(CliError::Core)?;
    let mut run = RunDir::create(&cfg.output_dir.join("runs"), "run", "run")?;
    let metrics_path = run.artifact("metrics.csv");
    let mut metrics = String::from("k,alpha,dsm_loss,psnr_mean,sw_distance\n");

    let mut iter_artifacts: Vec<(String, Vec<u8>)> = Vec::new();
    let image_size = meta.image_size;
    let (final_model, history) = em_run(
        &measurements,
        &clean_subset,
        &sched,
        &cfg.em,
        cfg.seed,
        Some(&truths),
        |rec, model, e_step| {
            iter_artifacts.push((
                format!("model_iter_{}.emdm", rec.k),
                emdm::scorenet::model_to_bytes(model),
            ));
            if let Some(size) = image_size {
                let montage = iteration_montage(&measurements, e_step, &truths, size);
                iter_artifacts.push((format!("montage_iter_{}.pgm", rec.k), montage));
            }
            Ok(())
        },
    )
    .map_err(CliError::Core)?;

    for rec in &history {
        metrics.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.k,
            format_metric(rec.alpha),
            format_metric(rec.dsm_loss),
            format_metric(rec.psnr_mean),
            format_metric(rec.sw_distance)
        ));
    }
    fs::write(&metrics_path, metrics)?;
    for (name, bytes) in iter_artifacts {
        let path = run.artifact(&name);
        fs::write(&path, bytes)?;
    }
    let final_path = run.artifact("final.emdm");
    save_model(&final_model, &final_path).map_err(CliError::Core)?;
    run.write_manifest()?;
    Ok(run.root().to_path_buf())
}

/// Rows of (measurement | posterior sample | truth) for the first few
/// measurements of the iteration.
fn iteration_montage(
    measurements: &[Measurement],
    e_step: &emdm::emloop::EStepSamples,
    truths: &[Tensor],
    size: usize,
) -> Vec<u8> {
    let mut rows = Vec::new();
    for (id, sample) in e_step.ids.iter().zip(&e_step.samples).take(6) {
        let Some(m) = measurements.iter().find(|m| m.id == *id) else {
            continue;
        };
        let Some(truth) = truths.get(*id as usize) else {
            continue;
        };
        rows.push(montage_row(&[&m.y, sample, truth], size));
    }
    let width = 3 * size + 2;
    let (stacked, height) = montage_stack(&rows, size, width);
    let mut bytes = format!("P5\n{} {}\n255\n", width, height).into_bytes();
    bytes.extend(
        stacked
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    bytes
}

/// Evaluate a checkpoint: reconstruction PSNR over measurements, a
/// distribution distance for unconditional generation, and optionally the
/// guided baseline for comparison.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path) -> CliResult<PathBuf> {
    let model = load_checkpoint(checkpoint)?;
    let clean = load_clean_data(cfg)
        .map_err(|e| CliError::stage("clean-data inputs", e))?;
    let (measurements, _) = load_measurements(cfg)
        .map_err(|e| CliError::stage("eval inputs", e))?;
    let sched = NoiseSchedule::from_config(&cfg.schedule).map_err(CliError::Core)?;
    let (n_clean, d) = clean.as_matrix().map_err(CliError::Core)?;
    if d != model.data_dim() {
        return Err(CliError::config(format!(
            "checkpoint dimension {} does not match dataset dimension {}",
            model.data_dim(),
            d
        )));
    }

    let truths: Vec<Tensor> = (0..n_clean)
        .map(|i| clean.row_tensor(i).map_err(CliError::Core))
        .collect::<CliResult<_>>()?;
    let subset: Vec<&Measurement> = measurements.iter().take(cfg.eval.n_recon).collect();

    let mean_psnr_vs_truth = |rows: &[(u64, Tensor)]| -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for (id, x) in rows {
            if let Some(t) = truths.get(*id as usize) {
                if let Ok(v) = psnr(x, t, 1.0) {
                    total += v;
                    count += 1;
                }
            }
        }
        if count == 0 {
            f64::NAN
        } else {
            total / count as f64
        }
    };

    let meas_rows: Vec<(u64, Tensor)> =
        subset.iter().map(|m| (m.id, m.y.clone())).collect();
    let psnr_measurements = mean_psnr_vs_truth(&meas_rows);

    let owned: Vec<Measurement> = subset.iter().map(|m| (*m).clone()).collect();
    let pmc_cfg = cfg.em.pmc.with_alpha(1.0);
    let recon = posterior_batch(
        &model,
        &owned,
        &pmc_cfg,
        derive_seed(cfg.seed, 0xE7A1),
        1,
    )
    .map_err(CliError::Core)?;
    let recon_rows: Vec<(u64, Tensor)> = owned
        .iter()
        .map(|m| m.id)
        .zip(recon)
        .map(|(id, x)| (id, x))
        .collect();
    let psnr_pmc = mean_psnr_vs_truth(&recon_rows);

    let mut gen_rng = Rng::derive(cfg.seed, 0xE7A2);
    let generated = sample_unconditional(
        &model,
        &sched,
        d,
        cfg.eval.gen_samples,
        &mut gen_rng,
    )
    .map_err(CliError::Core)?;
    let sw_model = sliced_wasserstein(
        &generated,
        &clean,
        cfg.eval.sw_projections,
        &mut Rng::derive(cfg.seed, 0xE7A3),
    )
    .map_err(CliError::Core)?;

    let mut report = String::from("metric,value\n");
    report.push_str(&format!("psnr_measurements,{}\n", format_metric(psnr_measurements)));
    report.push_str(&format!("psnr_pmc,{}\n", format_metric(psnr_pmc)));
    report.push_str(&format!("sw_model,{}\n", format_metric(sw_model)));

    if cfg.eval.run_dps_baseline {
        let dps_cfg = cfg
            .dps
            .clone()
            .ok_or_else(|| CliError::config("dps baseline requested but no dps config"))?;
        let mut rows = Vec::with_capacity(owned.len());
        for m in &owned {
            let mut rng = Rng::derive(cfg.seed, 0xD125 ^ m.id);
            let x = sample_dps(&model, &sched, &m.op, &m.y, &dps_cfg, &mut rng)
                .map_err(CliError::Core)?;
            rows.push((m.id, x));
        }
        let psnr_dps = mean_psnr_vs_truth(&rows);
        report.push_str(&format!("psnr_dps,{}\n", format_metric(psnr_dps)));
    }

    let mut run = RunDir::create(&cfg.output_dir.join("eval"), "eval", "eval")?;
    let report_path = run.artifact("report.csv");
    fs::write(&report_path, report)?;

    if cfg.eval.trace_chain {
        if let Some(first) = owned.first() {
            // Same stream as the first chain of the reconstruction batch.
            let mut trace = Vec::new();
            let mut rng = Rng::derive(derive_seed(derive_seed(cfg.seed, 0xE7A1), first.id), 0);
            emdm::samplers::sample_pmc_traced(
                &model,
                &first.op,
                &first.y,
                &pmc_cfg,
                &mut rng,
                first.x_init.as_ref(),
                &mut trace,
            )
            .map_err(CliError::Core)?;
            let mut csv = String::from("step,log_likelihood,state_norm\n");
            for row in &trace {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    row.step, row.log_likelihood, row.state_norm
                ));
            }
            let trace_path = run.artifact("trace_chain.csv");
            fs::write(&trace_path, csv)?;
        }
    }
    run.write_manifest()?;
    Ok(run.root().to_path_buf())
}

/// Dump unconditional samples from a checkpoint.
pub fn cmd_sample(cfg: &ExperimentConfig, checkpoint: &Path, n: usize) -> CliResult<PathBuf> {
    let model = load_checkpoint(checkpoint)?;
    let sched = NoiseSchedule::from_config(&cfg.schedule).map_err(CliError::Core)?;
    let d = model.data_dim();
    let mut rng = Rng::derive(cfg.seed, 0x5A3C);
    let samples = sample_unconditional(&model, &sched, d, n, &mut rng).map_err(CliError::Core)?;
    let mut run = RunDir::create(&cfg.output_dir.join("samples"), "samples", "sample")?;
    let csv_path = run.artifact("samples.csv");
    write_csv_rows(&csv_path, &samples)?;
    if let Some(size) = cfg.dataset.image_size() {
        if size * size == d {
            let rows: Vec<Tensor> = (0..n.min(8))
                .map(|i| samples.row_tensor(i).map_err(CliError::Core))
                .collect::<CliResult<_>>()?;
            let strips: Vec<Tensor> = rows
                .chunks_exact(4)
                .map(|chunk| {
                    let refs: Vec<&Tensor> = chunk.iter().collect();
                    montage_row(&refs, size)
                })
                .collect();
            if let Some(first) = strips.first() {
                let width = first.len() / size;
                let (stacked, height) = montage_stack(&strips, size, width);
                let montage_path = run.artifact("samples.pgm");
                write_pgm(&montage_path, &stacked, height, width)?;
            }
        }
    }
    run.write_manifest()?;
    Ok(run.root().to_path_buf())
}

fn load_checkpoint(path: &Path) -> CliResult<ScoreModel> {
    match load_model(path) {
        Ok(m) => Ok(m),
        Err(emdm::Error::Io(e)) => Err(CliError::stage("checkpoint inputs", CliError::Io(e))),
        Err(e) => Err(e.into()),
    }
}
