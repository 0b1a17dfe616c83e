//! Experiment drivers: each one turns a config into CSV tables.
//!
//! All randomness flows from the config seed through stable per-row stream
//! ids, and all trial aggregation is order-fixed, so rerunning a config
//! reproduces every output byte regardless of the worker count.

use crate::config::{Experiment, ExperimentConfig, ModeSel};
use crate::engine::{init_threads, mc_stats, McKind, TrialStats};
use crate::mud::{brute_force_optimum, build_mud_observable, make_mud_instance};
use crate::output::{Cell, Manifest, Table, TableInfo, Versions};
use crate::qaoa::{build_qaoa_circuit, gates_per_stage, ising_terms, noise_layer_count};
use qem_core::bounds::{
    noqem_dynamic_range, noqem_error_upper, qem_rmse_bound_general, qem_rmse_bound_pauli,
    qem_rmse_conjecture,
};
use qem_core::channels::{amplitude_damping, depolarizing, Channel, GeneralChannel};
use qem_core::quasiprob::{default_single_qubit_basis, invert_general, QuasiProbDecomposition};
use qem_core::simulator::{
    derive_rng, repeated_gate_circuit, run_exact_qem, run_moment_recursion_general,
    run_moment_recursion_pauli, run_noiseless, run_noisy, Circuit, Gate, PreparedQem,
};
use qem_core::{Observable, PauliIndex, PtmState};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Everything a run produced, ready to be written to the output directory.
#[derive(Debug)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub manifest: Manifest,
}

/// Extra facts a driver wants recorded in the manifest.
#[derive(Debug, Default)]
struct DriverMeta {
    gates_per_stage: Option<usize>,
    layers_per_stage: Option<usize>,
    objective_optimum: Option<f64>,
}

/// Runs the configured experiment and assembles the manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<RunOutput> {
    cfg.validate()?;
    let threads = init_threads();
    let start = Instant::now();
    let (tables, meta) = match cfg.experiment {
        Experiment::BlochX => (exp_bloch(cfg, BlochGate::PauliX)?, DriverMeta::default()),
        Experiment::BlochRx => (exp_bloch(cfg, BlochGate::RotationX)?, DriverMeta::default()),
        Experiment::AmpDampX => (exp_amp_damp(cfg, BlochGate::PauliX)?, DriverMeta::default()),
        Experiment::AmpDampRx => {
            (exp_amp_damp(cfg, BlochGate::RotationX)?, DriverMeta::default())
        }
        Experiment::QaoaMud => exp_qaoa_mud(cfg)?,
        Experiment::BoundsTable => (vec![emit_bounds_table(cfg)], DriverMeta::default()),
    };
    let manifest = Manifest {
        experiment: cfg.experiment.as_str().into(),
        config: cfg.clone(),
        config_sha256: cfg.sha256(),
        seed: cfg.seed,
        threads,
        gates_per_stage: meta.gates_per_stage,
        layers_per_stage: meta.layers_per_stage,
        objective_optimum: meta.objective_optimum,
        tables: tables
            .iter()
            .map(|t| TableInfo {
                name: t.name.clone(),
                rows: t.rows.len(),
                file: format!("{}.csv", t.name),
            })
            .collect(),
        wall_seconds: start.elapsed().as_secs_f64(),
        versions: Versions::current(),
    };
    Ok(RunOutput { tables, manifest })
}

/// Writes all tables plus the manifest; returns the written paths.
pub fn write_output(out: &RunOutput, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for t in &out.tables {
        paths.push(t.write_to(dir)?);
    }
    paths.push(out.manifest.write_to(dir)?);
    Ok(paths)
}

/// Gate family of the single-qubit experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BlochGate {
    PauliX,
    RotationX,
}

impl BlochGate {
    fn gate(self, theta: f64) -> Gate {
        let x = PauliIndex::new(1, 1).expect("X on one qubit");
        match self {
            BlochGate::PauliX => Gate::pauli(x),
            BlochGate::RotationX => Gate::rotation(x, theta),
        }
    }
}

fn single_qubit_circuit(
    kind: BlochGate,
    theta: f64,
    noise: Channel,
    count: usize,
) -> qem_core::Result<Circuit> {
    repeated_gate_circuit(
        kind.gate(theta),
        Some(noise),
        count,
        PtmState::zero_state(1),
        Observable::z_on(1, 0).unwrap(),
    )
}

/// Ordered mode list for column layout.
fn enabled_modes(cfg: &ExperimentConfig) -> Vec<ModeSel> {
    ModeSel::ALL.iter().copied().filter(|m| cfg.has_mode(*m)).collect()
}

fn rmse_header(cfg: &ExperimentConfig, first: &str, with_bounds: bool) -> Vec<String> {
    let mut header = vec![first.to_string()];
    for m in enabled_modes(cfg) {
        header.push(format!("{}_rmse", m.as_str()));
        if m == ModeSel::McEmpirical {
            header.push("mc_empirical_rmse_analytic".into());
        }
    }
    if with_bounds {
        for b in [
            "dynamic_range_lb",
            "bias_ub",
            "rmse_bound_general",
            "rmse_bound_pauli",
            "conjecture",
        ] {
            header.push(b.into());
        }
    }
    header.iter().map(|s| s.to_string()).collect()
}

/// Stream id offset separating a driver's trajectory table from its
/// RMSE table.
const TRAJECTORY_TAG: u64 = 0x7A00;

/// Per-experiment tags keeping RNG streams of different drivers apart.
fn stream_tag(e: Experiment) -> u64 {
    match e {
        Experiment::BlochX => 1,
        Experiment::BlochRx => 2,
        Experiment::AmpDampX => 3,
        Experiment::AmpDampRx => 4,
        Experiment::QaoaMud => 5,
        Experiment::BoundsTable => 6,
    }
}

/// One RMSE row: deterministic modes directly, sampling modes over
/// `cfg.trials` trials, plus the analytic recursion column.
fn rmse_cells(
    cfg: &ExperimentConfig,
    circuit: &Circuit,
    analytic: Option<f64>,
    row_tags: &[u64],
) -> anyhow::Result<Vec<Cell>> {
    let ideal = run_noiseless(circuit);
    let mut cells: Vec<Cell> = Vec::new();
    for m in enabled_modes(cfg) {
        match m {
            ModeSel::Noqem => {
                cells.push(((run_noisy(circuit) - ideal).abs()).into());
            }
            ModeSel::ExactQem => {
                cells.push(((run_exact_qem(circuit)? - ideal).abs()).into());
            }
            ModeSel::McEmpirical | ModeSel::McConcat => {
                let (kind, tag) = match m {
                    ModeSel::McEmpirical => (McKind::Empirical, 1u64),
                    _ => (McKind::Concat, 2u64),
                };
                let mut tags = row_tags.to_vec();
                tags.push(tag);
                let seed = crate::engine::row_seed(cfg.seed, &tags);
                let prep = PreparedQem::new(circuit, cfg.ns, seed)?;
                let stats = mc_stats(&prep, kind, cfg.trials, ideal);
                cells.push(stats.rmse.into());
                if m == ModeSel::McEmpirical {
                    cells.push(analytic.unwrap_or(f64::NAN).into());
                }
            }
        }
    }
    Ok(cells)
}

/// Repeated X / Rx(theta) under per-gate depolarizing noise: RMSE per mode
/// against the gate count, with the analytic bounds alongside. The Rx
/// variant also emits the oscillation trajectory.
fn exp_bloch(cfg: &ExperimentConfig, kind: BlochGate) -> anyhow::Result<Vec<Table>> {
    let tag = stream_tag(cfg.experiment);
    let theta = cfg.theta;
    let name = match kind {
        BlochGate::PauliX => "bloch_x_rmse",
        BlochGate::RotationX => "bloch_rx_rmse",
    };
    let header = rmse_header(cfg, "ng", true);
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rmse_table = Table::new(name, &header_refs);

    for &ng in &cfg.ng_list {
        let noise: Channel = depolarizing(cfg.eps)?.into();
        let circuit = single_qubit_circuit(kind, theta, noise, ng)?;
        let analytic = if cfg.has_mode(ModeSel::McEmpirical) {
            Some(run_moment_recursion_pauli(&circuit, cfg.ns)?.rmse(circuit.observable()))
        } else {
            None
        };
        let mut row: Vec<Cell> = vec![ng.into()];
        row.extend(rmse_cells(cfg, &circuit, analytic, &[tag, ng as u64])?);
        row.push(noqem_dynamic_range(cfg.eps / 3.0, ng as u64).into());
        row.push(noqem_error_upper(cfg.eps, ng as u64).into());
        row.push(qem_rmse_bound_general(1, ng as u64, cfg.ns).into());
        row.push(qem_rmse_bound_pauli(1, ng as u64, cfg.ns, cfg.eps)?.into());
        row.push(qem_rmse_conjecture(cfg.eps, ng as u64, cfg.ns).into());
        rmse_table.push_row(row);
    }

    let mut tables = vec![rmse_table];
    if kind == BlochGate::RotationX {
        tables.push(bloch_trajectory(cfg, kind)?);
    }
    Ok(tables)
}

/// Mean estimate per mode along the gate axis (the oscillation plot data).
fn bloch_trajectory(cfg: &ExperimentConfig, kind: BlochGate) -> anyhow::Result<Table> {
    let tag = stream_tag(cfg.experiment) ^ TRAJECTORY_TAG;
    let max_ng = cfg.ng_list.iter().copied().max().unwrap_or(0);
    let step = (max_ng / 256).max(1);
    let mut header: Vec<String> = vec!["ng".into(), "rtilde".into(), "envelope".into()];
    for m in enabled_modes(cfg) {
        header.push(format!("{}_mean", m.as_str()));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut table = Table::new("bloch_rx_trajectory", &header_refs);

    let mut ng = 0usize;
    while ng <= max_ng {
        let noise: Channel = depolarizing(cfg.eps)?.into();
        let circuit = single_qubit_circuit(kind, cfg.theta, noise, ng)?;
        let ideal = run_noiseless(&circuit);
        let mut row: Vec<Cell> = vec![
            ng.into(),
            ideal.into(),
            noqem_dynamic_range(cfg.eps / 3.0, ng as u64).into(),
        ];
        for m in enabled_modes(cfg) {
            let value = match m {
                ModeSel::Noqem => run_noisy(&circuit),
                ModeSel::ExactQem => run_exact_qem(&circuit)?,
                ModeSel::McEmpirical | ModeSel::McConcat => {
                    let (kind_mc, mtag) = match m {
                        ModeSel::McEmpirical => (McKind::Empirical, 1u64),
                        _ => (McKind::Concat, 2u64),
                    };
                    let seed = crate::engine::row_seed(cfg.seed, &[tag, ng as u64, mtag]);
                    let prep = PreparedQem::new(&circuit, cfg.ns, seed)?;
                    mc_stats(&prep, kind_mc, cfg.trials, ideal).mean
                }
            };
            row.push(value.into());
        }
        table.push_row(row);
        ng += step;
    }
    Ok(table)
}

/// Repeated X / Rx under per-gate amplitude damping; mitigation inverts
/// through the 16-operation general basis, and the analytic column comes
/// from the general moment recursion.
fn exp_amp_damp(cfg: &ExperimentConfig, kind: BlochGate) -> anyhow::Result<Vec<Table>> {
    let tag = stream_tag(cfg.experiment);
    let name = match kind {
        BlochGate::PauliX => "amp_damp_x_rmse",
        BlochGate::RotationX => "amp_damp_rx_rmse",
    };
    let header = rmse_header(cfg, "ng", false);
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut table = Table::new(name, &header_refs);

    let channel = amplitude_damping(cfg.gamma)?;
    let decomp = invert_general(&channel, &default_single_qubit_basis())?;

    for &ng in &cfg.ng_list {
        let circuit =
            single_qubit_circuit(kind, cfg.theta, Channel::General(channel.clone()), ng)?;
        let analytic = if cfg.has_mode(ModeSel::McEmpirical) {
            let decomps: Vec<QuasiProbDecomposition> = vec![decomp.clone(); ng];
            Some(
                run_moment_recursion_general(&circuit, cfg.ns, &decomps)?
                    .rmse(circuit.observable()),
            )
        } else {
            None
        };
        let mut row: Vec<Cell> = vec![ng.into()];
        row.extend(rmse_cells(cfg, &circuit, analytic, &[tag, ng as u64])?);
        table.push_row(row);
    }
    Ok(vec![table])
}

fn exp_qaoa_mud(cfg: &ExperimentConfig) -> anyhow::Result<(Vec<Table>, DriverMeta)> {
    let tag = stream_tag(Experiment::QaoaMud);
    let mut rng = derive_rng(cfg.seed, &[tag]);
    let inst = make_mud_instance(4, 4, 12.0, &mut rng);
    let obs = build_mud_observable(&inst)?;
    let terms = ising_terms(&obs)?;
    let per_stage = gates_per_stage(&terms, 4);
    let (_, optimum) = brute_force_optimum(&inst);

    let header = rmse_header(cfg, "p", false);
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rmse_table = Table::new("qaoa_rmse", &header_refs);
    for &p in &cfg.p_list {
        let circuit = build_qaoa_circuit(&obs, p, cfg.eps)?;
        let analytic = if cfg.has_mode(ModeSel::McEmpirical) {
            Some(run_moment_recursion_pauli(&circuit, cfg.ns)?.rmse(circuit.observable()))
        } else {
            None
        };
        let mut row: Vec<Cell> = vec![p.into()];
        row.extend(rmse_cells(cfg, &circuit, analytic, &[tag, p as u64])?);
        rmse_table.push_row(row);
    }

    let p_max = cfg.p_list.iter().copied().max().unwrap_or(0);
    let trajectory = qaoa_trajectory(cfg, &obs, p_max, per_stage)?;

    let full = build_qaoa_circuit(&obs, p_max.max(1), cfg.eps)?;
    let meta = DriverMeta {
        gates_per_stage: Some(per_stage),
        layers_per_stage: Some(noise_layer_count(&full) / p_max.max(1)),
        objective_optimum: Some(optimum),
    };
    Ok((vec![rmse_table, trajectory], meta))
}

/// Objective value per mode after each stage of the deepest configured
/// circuit, with the exponential dynamic-range envelope alongside.
fn qaoa_trajectory(
    cfg: &ExperimentConfig,
    obs: &Observable,
    p: usize,
    per_stage: usize,
) -> anyhow::Result<Table> {
    let tag = stream_tag(Experiment::QaoaMud) ^ TRAJECTORY_TAG;
    let mut header: Vec<String> = vec!["k".into(), "rtilde".into(), "envelope".into()];
    for m in enabled_modes(cfg) {
        header.push(format!("{}_mean", m.as_str()));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut table = Table::new("qaoa_trajectory", &header_refs);

    let full = build_qaoa_circuit(obs, p, cfg.eps)?;
    for k in 0..=p {
        let prefix = full.prefix(k * per_stage);
        let ideal = run_noiseless(&prefix);
        let layers = noise_layer_count(&prefix) as u64;
        let mut row: Vec<Cell> = vec![
            (k as u64).into(),
            ideal.into(),
            noqem_dynamic_range(cfg.eps / 3.0, layers).into(),
        ];
        for m in enabled_modes(cfg) {
            let value = match m {
                ModeSel::Noqem => run_noisy(&prefix),
                ModeSel::ExactQem => run_exact_qem(&prefix)?,
                ModeSel::McEmpirical | ModeSel::McConcat => {
                    let (kind, mtag) = match m {
                        ModeSel::McEmpirical => (McKind::Empirical, 1u64),
                        _ => (McKind::Concat, 2u64),
                    };
                    if k == 0 {
                        run_noiseless(&prefix)
                    } else {
                        let seed = crate::engine::row_seed(cfg.seed, &[tag, k as u64, mtag]);
                        let prep = PreparedQem::new(&prefix, cfg.ns, seed)?;
                        mc_stats(&prep, kind, cfg.trials, ideal).mean
                    }
                }
            };
            row.push(value.into());
        }
        table.push_row(row);
    }
    Ok(table)
}

/// Tabulates every bound over the configured gate grid.
fn emit_bounds_table(cfg: &ExperimentConfig) -> Table {
    let mut table = Table::new(
        "bounds_table",
        &[
            "n",
            "ng",
            "ns",
            "eps",
            "dynamic_range_lb",
            "bias_ub",
            "rmse_bound_general",
            "rmse_bound_pauli",
            "conjecture",
        ],
    );
    for &ng in &cfg.ng_list {
        let pauli_bound = qem_rmse_bound_pauli(cfg.qubits, ng as u64, cfg.ns, cfg.eps)
            .map(Cell::from)
            .unwrap_or(Cell::Float(f64::NAN));
        table.push_row(vec![
            cfg.qubits.into(),
            ng.into(),
            cfg.ns.into(),
            cfg.eps.into(),
            noqem_dynamic_range(cfg.eps / 3.0, ng as u64).into(),
            noqem_error_upper(cfg.eps, ng as u64).into(),
            qem_rmse_bound_general(cfg.qubits, ng as u64, cfg.ns).into(),
            pauli_bound,
            qem_rmse_conjecture(cfg.eps, ng as u64, cfg.ns).into(),
        ]);
    }
    table
}

/// Convenience: analytic recursion RMSE for a repeated-gate depolarizing
/// circuit, used by tests and the CLI summary.
pub fn analytic_rmse_bloch(
    kind_is_x: bool,
    eps: f64,
    theta: f64,
    ng: usize,
    ns: u64,
) -> anyhow::Result<f64> {
    let kind = if kind_is_x { BlochGate::PauliX } else { BlochGate::RotationX };
    let circuit = single_qubit_circuit(kind, theta, depolarizing(eps)?.into(), ng)?;
    Ok(run_moment_recursion_pauli(&circuit, ns)?.rmse(circuit.observable()))
}

/// The trial statistics of one Monte Carlo mode on a repeated-gate circuit,
/// exposed for the acceptance suite.
pub fn bloch_mc_stats(
    kind_is_x: bool,
    eps: f64,
    theta: f64,
    ng: usize,
    ns: u64,
    trials: u64,
    seed: u64,
    empirical: bool,
) -> anyhow::Result<TrialStats> {
    let kind = if kind_is_x { BlochGate::PauliX } else { BlochGate::RotationX };
    let circuit = single_qubit_circuit(kind, theta, depolarizing(eps)?.into(), ng)?;
    let ideal = run_noiseless(&circuit);
    let prep = PreparedQem::new(&circuit, ns, seed)?;
    let kind_mc = if empirical { McKind::Empirical } else { McKind::Concat };
    Ok(mc_stats(&prep, kind_mc, trials, ideal))
}

/// Builds the standard repeated-gate circuits the acceptance suite reuses.
pub fn bloch_circuit(
    kind_is_x: bool,
    noise: Option<Channel>,
    theta: f64,
    ng: usize,
) -> qem_core::Result<Circuit> {
    let kind = if kind_is_x { BlochGate::PauliX } else { BlochGate::RotationX };
    match noise {
        Some(ch) => single_qubit_circuit(kind, theta, ch, ng),
        None => repeated_gate_circuit(
            kind.gate(theta),
            None,
            ng,
            PtmState::zero_state(1),
            Observable::z_on(1, 0).unwrap(),
        ),
    }
}

/// Amplitude-damping channel reused across tests.
pub fn damping_channel(gamma: f64) -> qem_core::Result<GeneralChannel> {
    amplitude_damping(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn tiny_cfg(experiment: Experiment) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::base(experiment);
        cfg.ng_list = vec![1, 4, 10];
        cfg.p_list = vec![1, 2];
        cfg.ns = 200;
        cfg.trials = 8;
        cfg
    }

    #[test]
    fn bloch_x_table_shape_and_determinism() {
        let cfg = tiny_cfg(Experiment::BlochX);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.tables.len(), 1);
        let t = &a.tables[0];
        assert_eq!(t.rows.len(), 3);
        // ng + 4 mode columns + analytic + 5 bounds
        assert_eq!(t.header.len(), 1 + 5 + 5);
        assert_eq!(t.to_csv(), b.tables[0].to_csv());
    }

    #[test]
    fn bloch_rx_emits_trajectory() {
        let mut cfg = tiny_cfg(Experiment::BlochRx);
        cfg.modes = vec![ModeSel::Noqem, ModeSel::ExactQem];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.tables.len(), 2);
        assert_eq!(out.tables[1].name, "bloch_rx_trajectory");
        // ng 0 through 10 stepped by 1.
        assert_eq!(out.tables[1].rows.len(), 11);
    }

    #[test]
    fn amp_damp_runs_all_modes() {
        let mut cfg = tiny_cfg(Experiment::AmpDampX);
        cfg.ng_list = vec![1, 3];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.tables.len(), 1);
        assert_eq!(out.tables[0].rows.len(), 2);
    }

    #[test]
    fn qaoa_tables_and_meta() {
        let mut cfg = tiny_cfg(Experiment::QaoaMud);
        cfg.modes = vec![ModeSel::Noqem, ModeSel::ExactQem, ModeSel::McEmpirical];
        cfg.ns = 100;
        cfg.trials = 4;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.tables.len(), 2);
        assert_eq!(out.manifest.gates_per_stage, Some(14));
        assert_eq!(out.manifest.layers_per_stage, Some(2));
        assert!(out.manifest.objective_optimum.unwrap().abs() <= 1.0);
        // Trajectory has p_max + 1 rows including stage 0.
        assert_eq!(out.tables[1].rows.len(), 3);
    }

    #[test]
    fn bounds_table_handles_zero_gates() {
        let mut cfg = tiny_cfg(Experiment::BoundsTable);
        cfg.ng_list = vec![0, 10];
        let out = run_experiment(&cfg).unwrap();
        let csv = out.tables[0].to_csv();
        let first_row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        // Every bound except the dynamic range is zero at ng = 0.
        for col in [5, 6, 7, 8] {
            assert_eq!(first_row[col].parse::<f64>().unwrap(), 0.0);
        }
        assert_eq!(first_row[4].parse::<f64>().unwrap(), 1.0);
    }
}
