//! The `cvp` command line: one subcommand per pipeline stage.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::action::{
    auto_test_space, check_restricted_el, eval_ell, interior_points, solve_critical_weights,
    variation_fd_oracle,
};
use crate::cones::{
    build_hat_r, cross_sections_csv, relation_cone_report, retarded_cone_report, transitive_closure,
};
use crate::error::{Error, Result};
use crate::gluing::{build_covering, global_weak_residual, glue_global, CoveringSpec};
use crate::green::{
    assemble_greens, extract_sequence_spaces, verify_exact_sequence, GreensOptions,
};
use crate::instance::{Instance, KernelName, KernelSpec};
use crate::io::{self, InputDigest, Manifest};
use crate::jets::{all_axes, build_space, vary_space, JetSpace};
use crate::lens::{
    default_tilt, glue_step, solve_weak, Context, LensOptions, LensRegion, LensSpec,
};
use crate::surface::{energy_identity_check, verify_hyperbolicity, Foliation};

#[derive(Parser, Debug)]
#[command(
    name = "cvp",
    version,
    about = "Causal variational principles on weighted point clouds"
)]
struct Cli {
    /// Write the run manifest to this file instead of stderr.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelArg {
    Iso,
    Lightcone,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TestArg {
    /// Scalars everywhere; vector directions only where `Dℓ` is below tolerance.
    Auto,
    /// Scalars and all translations at every point.
    Full,
    /// Scalars and all translations at points at least one range away from
    /// every non-periodic boundary.
    Interior,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a regular lattice instance.
    Gen {
        /// Points per axis, time axis first, e.g. `16x16`.
        #[arg(long)]
        lattice: String,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        #[arg(long, value_enum, default_value = "iso")]
        kernel: KernelArg,
        #[arg(long, default_value_t = 1.5)]
        range: f64,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        /// Cone slope of the lightcone kernel.
        #[arg(long)]
        slope: Option<f64>,
        /// Cone offset of the lightcone kernel.
        #[arg(long)]
        offset: Option<f64>,
        /// Comma-separated periodic axes.
        #[arg(long, value_delimiter = ',')]
        periodic: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        s_param: f64,
        /// Replace the unit weights by critical weights.
        #[arg(long)]
        critical: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for weights making `ℓ` vanish on every point.
    Critical {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the restricted Euler-Lagrange equations.
    CheckEl {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, value_enum, default_value = "interior")]
        test: TestArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply the linearized field operator to a jet.
    Delta {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        jet: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also compare with the finite-difference variation at this step.
        #[arg(long)]
        oracle_step: Option<f64>,
    },
    /// Compare `d/dt (v,v)^t` with the energy identity.
    EnergyCheck {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        lens: PathBuf,
        #[arg(long)]
        jet: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        /// Gap below which the check passes regardless of the observed order.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify the hyperbolicity condition on every foliation grid value.
    Hyperbolicity {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        lens: PathBuf,
        #[arg(long, default_value_t = 8)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimal-norm weak solution in one lens and its cutoff step.
    SolveLocal {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        lens: PathBuf,
        #[arg(long)]
        inhom: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write `{v_out, w_tilde}` of the cutoff step here.
        #[arg(long)]
        glue_out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        skip_hyperbolicity: bool,
    },
    /// Global solution by gluing over a covering.
    Glue {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        covering: PathBuf,
        #[arg(long)]
        inhom: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        /// Stop once the residual outside the top margin is below this fraction of the source.
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
    /// Assemble the retarded and advanced Green's operators.
    Green {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        covering: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
    },
    /// Verify the exact sequence on a saved Green's system.
    ExactSeq {
        #[arg(long)]
        gs: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Causal relations induced by the retarded supports.
    Cones {
        #[arg(long)]
        gs: PathBuf,
        /// Transitive relation `R` as `i,j` pairs.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        hat_out: Option<PathBuf>,
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Neighbourhood radius for the generating relation (default: lattice spacing).
        #[arg(long)]
        radius: Option<f64>,
        /// Cone slope to check against (default: the lightcone kernel slope).
        #[arg(long)]
        slope: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Comma-separated source points for plot-ready future cross sections.
        #[arg(long, value_delimiter = ',')]
        sections: Vec<usize>,
        #[arg(long)]
        sections_out: Option<PathBuf>,
    },
}

/// Lens file: a lens spec whose region may be left out, in which case it is
/// the band `t_min - delta - pad ≤ τ ≤ t_max + pad` (pad defaults to the range).
#[derive(Deserialize)]
struct LensFile {
    #[serde(default)]
    region: Option<Vec<usize>>,
    t_min: f64,
    t_max: f64,
    grid_count: usize,
    delta: f64,
    #[serde(default = "default_tilt")]
    tilt: f64,
    #[serde(default)]
    pad: Option<f64>,
}

fn read_lens(path: &Path, inst: &Instance) -> Result<LensSpec> {
    let f: LensFile = io::read_json(path)?;
    let pad = f.pad.unwrap_or(inst.kernel.range);
    let region = f.region.unwrap_or_else(|| {
        (0..inst.n_points())
            .filter(|&i| inst.time(i) >= f.t_min - f.delta - pad && inst.time(i) <= f.t_max + pad)
            .collect()
    });
    Ok(LensSpec {
        region,
        t_min: f.t_min,
        t_max: f.t_max,
        grid_count: f.grid_count,
        delta: f.delta,
        tilt: f.tilt,
    })
}

struct Outcome {
    pass: bool,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    params: serde_json::Value,
    report: serde_json::Value,
}

impl Outcome {
    fn new(
        pass: bool,
        inputs: &[&Path],
        params: serde_json::Value,
        report: serde_json::Value,
    ) -> Self {
        Outcome {
            pass,
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            outputs: Vec::new(),
            params,
            report,
        }
    }

    fn wrote(mut self, p: &Path) -> Self {
        self.outputs.push(p.to_path_buf());
        self
    }
}

fn write_opt<T: Serialize>(out: &Option<PathBuf>, value: &T, o: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(p) = out {
        io::write_json(p, value)?;
        o.push(p.clone());
    }
    Ok(())
}

fn parse_lattice(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad lattice extent {t:?} in {s:?}")))
        })
        .collect()
}

fn test_space(inst: &Instance, which: TestArg, tol: f64) -> JetSpace {
    let all: Vec<usize> = (0..inst.n_points()).collect();
    match which {
        TestArg::Auto => auto_test_space(inst, &eval_ell(inst), tol),
        TestArg::Full => build_space(inst, &all, all_axes(inst), None),
        TestArg::Interior => {
            let inner = interior_points(inst);
            build_space(
                inst,
                &all,
                |i| {
                    if inner.binary_search(&i).is_ok() {
                        (0..inst.dim).collect()
                    } else {
                        Vec::new()
                    }
                },
                None,
            )
        }
    }
}

fn execute(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Gen {
            lattice,
            spacing,
            kernel,
            range,
            amplitude,
            slope,
            offset,
            periodic,
            s_param,
            critical,
            out,
        } => {
            let extent = parse_lattice(lattice)?;
            let mut k = match kernel {
                KernelArg::Iso => KernelSpec::iso(*range, *amplitude),
                KernelArg::Lightcone => {
                    KernelSpec::lightcone(*range, *amplitude, slope.unwrap_or(1.0))
                }
            };
            if k.name == KernelName::LightconeBump {
                k.cone_offset = *offset;
            }
            let mut inst =
                Instance::generate_lattice(extent.len(), &extent, *spacing, k, periodic, *s_param)?;
            if *critical {
                inst = solve_critical_weights(&inst)?;
            }
            io::write_json(out, &inst)?;
            let params = json!({"lattice": extent, "spacing": spacing, "kernel": inst.kernel, "periodic": periodic,
                "s_param": s_param, "critical": critical});
            Ok(Outcome::new(true, &[], params, json!({"n_points": inst.n_points()})).wrote(out))
        }
        Command::Critical { instance, out } => {
            let inst = io::read_instance(instance)?;
            let crit = solve_critical_weights(&inst)?;
            io::write_json(out, &crit)?;
            let rep = eval_ell(&crit);
            let wmin = crit.weights.iter().cloned().fold(f64::INFINITY, f64::min);
            let wmax = crit.weights.iter().cloned().fold(0.0, f64::max);
            let report =
                json!({"max_abs_ell": rep.max_abs_ell, "min_weight": wmin, "max_weight": wmax});
            Ok(Outcome::new(true, &[instance], json!({}), report).wrote(out))
        }
        Command::CheckEl {
            instance,
            tol,
            test,
            out,
        } => {
            let inst = io::read_instance(instance)?;
            let space = test_space(&inst, *test, *tol);
            let check = check_restricted_el(&inst, &space, *tol);
            let mut o = Outcome::new(
                check.pass,
                &[instance],
                json!({"tol": tol, "test": format!("{test:?}").to_lowercase()}),
                json!({"pass": check.pass, "worst": check.worst, "test_dim": check.test_dim,
                    "max_abs_ell": check.report.max_abs_ell, "max_grad_on_test": check.report.max_grad_norm_on_test}),
            );
            write_opt(out, &check, &mut o.outputs)?;
            Ok(o)
        }
        Command::Delta {
            instance,
            jet,
            out,
            oracle_step,
        } => {
            let inst = io::read_instance(instance)?;
            let v = io::read_jet(jet, &inst)?;
            let ctx = Context::new(&inst);
            let dv = ctx.op.apply(&v);
            io::write_json(out, &dv)?;
            let mut report = json!({"norm": dv.coeffs.norm()});
            if let Some(h) = oracle_step {
                let fd = variation_fd_oracle(&inst, &v, *h)?;
                let gap = (&fd.coeffs - &dv.coeffs).amax();
                report["oracle_gap"] = json!(gap);
            }
            Ok(Outcome::new(
                true,
                &[instance, jet],
                json!({"oracle_step": oracle_step}),
                report,
            )
            .wrote(out))
        }
        Command::EnergyCheck {
            instance,
            lens,
            jet,
            t,
            h,
            tol,
            out,
        } => {
            let inst = io::read_instance(instance)?;
            let spec = read_lens(lens, &inst)?;
            let v = io::read_jet(jet, &inst)?;
            let ctx = Context::new(&inst);
            let fol = Foliation::new(
                inst.n_points(),
                spec.region,
                spec.t_min,
                spec.t_max,
                spec.grid_count,
                spec.delta,
            )?;
            let coarse =
                energy_identity_check(&inst, &ctx.table, &ctx.op, &ctx.d2, &fol, &v, *t, *h)?;
            let fine =
                energy_identity_check(&inst, &ctx.table, &ctx.op, &ctx.d2, &fol, &v, *t, h / 2.0)?;
            let order = (coarse.gap / fine.gap).log2();
            let pass = fine.gap <= *tol || order >= 1.9;
            let report = json!({"pass": pass, "coarse": coarse, "fine": fine, "order": order});
            let mut o = Outcome::new(
                pass,
                &[instance, lens, jet],
                json!({"t": t, "h": h, "tol": tol}),
                report.clone(),
            );
            write_opt(out, &report, &mut o.outputs)?;
            Ok(o)
        }
        Command::Hyperbolicity {
            instance,
            lens,
            trials,
            seed,
            out,
        } => {
            let inst = io::read_instance(instance)?;
            let spec = read_lens(lens, &inst)?;
            let ctx = Context::new(&inst);
            let fol = Foliation::new(
                inst.n_points(),
                spec.region.clone(),
                spec.t_min,
                spec.t_max,
                spec.grid_count,
                spec.delta,
            )?;
            fol.check(&inst)?;
            let vary = vary_space(&inst, &fol.region, spec.tilt);
            let reports: Vec<_> = fol
                .grid
                .par_iter()
                .map(|&t| {
                    verify_hyperbolicity(&inst, &ctx.table, &ctx.d2, &fol, &vary, t, *trials, *seed)
                })
                .collect();
            let pass = reports.iter().all(|r| r.hyperbolic);
            let c = reports.iter().filter_map(|r| r.c).fold(0.0, f64::max);
            let mut o = Outcome::new(
                pass,
                &[instance, lens],
                json!({"trials": trials, "seed": seed}),
                json!({"pass": pass, "grid": fol.grid.len(), "c": c}),
            );
            write_opt(out, &reports, &mut o.outputs)?;
            Ok(o)
        }
        Command::SolveLocal {
            instance,
            lens,
            inhom,
            out,
            glue_out,
            report,
            skip_hyperbolicity,
        } => {
            let inst = io::read_instance(instance)?;
            let spec = read_lens(lens, &inst)?;
            let w = io::read_jet(inhom, &inst)?;
            let ctx = Context::new(&inst);
            let opts = LensOptions {
                check_hyperbolicity: !skip_hyperbolicity,
                ..LensOptions::default()
            };
            let region = LensRegion::build(&ctx, &spec, &opts)?;
            let sol = solve_weak(&ctx, &region, &w)?;
            io::write_json(out, &sol.v)?;
            let step = glue_step(&ctx, &region, &w)?;
            let summary = json!({"gamma": sol.gamma, "residual": sol.residual, "vacuous": sol.vacuous,
                "w": region.w, "z": region.z, "test_dims": [region.j_under.dim(), region.j_bar.dim(), region.j_prime.dim()],
                "identity_residual": step.identity_residual, "w_tilde_support": step.w_tilde.support(crate::EPS),
                "warnings": region.warnings});
            let mut o = Outcome::new(
                true,
                &[instance, lens, inhom],
                json!({"lens": spec}),
                summary.clone(),
            )
            .wrote(out);
            write_opt(
                glue_out,
                &json!({"v_out": step.v_out, "w_tilde": step.w_tilde}),
                &mut o.outputs,
            )?;
            write_opt(report, &summary, &mut o.outputs)?;
            Ok(o)
        }
        Command::Glue {
            instance,
            covering,
            inhom,
            out,
            trace,
            max_iter,
            tol,
        } => {
            let inst = io::read_instance(instance)?;
            let spec: CoveringSpec = io::read_json(covering)?;
            let w = io::read_jet(inhom, &inst)?;
            let ctx = Context::new(&inst);
            let cov = build_covering(&ctx, &spec, &LensOptions::default())?;
            let (v, tr) = glue_global(&ctx, &cov, &w, *max_iter, *tol)?;
            io::write_json(out, &v)?;
            let residual = global_weak_residual(&ctx, &cov, &v, &w);
            let summary = json!({"rounds": tr.rounds.len(), "solve_rounds": tr.solve_rounds(), "advancing": tr.advancing(),
                "parked_norm": tr.parked_norm, "global_residual": residual, "test_dim": tr.test_dim});
            let mut o = Outcome::new(
                true,
                &[instance, covering, inhom],
                json!({"covering": spec, "max_iter": max_iter, "tol": tol}),
                summary,
            )
            .wrote(out);
            write_opt(
                trace,
                &json!({"certificate": cov.certificate(), "trace": tr}),
                &mut o.outputs,
            )?;
            Ok(o)
        }
        Command::Green {
            instance,
            covering,
            out,
            max_iter,
        } => {
            let inst = io::read_instance(instance)?;
            let spec: CoveringSpec = io::read_json(covering)?;
            let opts = GreensOptions {
                max_iter: *max_iter,
                ..GreensOptions::default()
            };
            let gs = assemble_greens(&inst, &spec, &opts)?;
            let written = io::save_greens(out, &inst, &gs)?;
            let pass = gs.flagged.is_empty();
            let report = json!({"admissible": gs.admissible.len(), "columns": gs.columns.len(), "flagged": gs.flagged,
                "max_rounds": gs.max_rounds, "test_dims": [gs.test.ncols(), gs.future_test.ncols(), gs.past_test.ncols()]});
            let mut o = Outcome::new(
                pass,
                &[instance, covering],
                json!({"covering": spec, "max_iter": max_iter}),
                report,
            );
            o.outputs = written;
            Ok(o)
        }
        Command::ExactSeq { gs, tol, out } => {
            let (_, sys) = io::load_greens(gs)?;
            let sp = extract_sequence_spaces(&sys);
            let rep = verify_exact_sequence(&sys, &sp, *tol);
            let lines: Vec<String> = rep
                .checks
                .iter()
                .map(|c| {
                    let v = if c.pass {
                        if c.vacuous {
                            "vacuous"
                        } else {
                            "pass"
                        }
                    } else {
                        "FAIL"
                    };
                    format!("{} {v} {:.3e}", c.step, c.residual)
                })
                .collect();
            let mut o = Outcome::new(
                rep.all_pass,
                &[gs],
                json!({"tol": tol}),
                json!({"all_pass": rep.all_pass, "dims": rep.dims, "checks": lines}),
            );
            write_opt(out, &rep, &mut o.outputs)?;
            Ok(o)
        }
        Command::Cones {
            gs,
            out,
            hat_out,
            dot,
            radius,
            slope,
            report,
            sections,
            sections_out,
        } => {
            let (inst, sys) = io::load_greens(gs)?;
            let hat = build_hat_r(&inst, &sys, *radius);
            let r = transitive_closure(&hat);
            std::fs::write(out, r.to_csv())?;
            let mut outputs = vec![out.clone()];
            if let Some(p) = hat_out {
                std::fs::write(p, hat.to_csv())?;
                outputs.push(p.clone());
            }
            if let Some(p) = dot {
                std::fs::write(p, r.to_dot("R"))?;
                outputs.push(p.clone());
            }
            if let Some(p) = sections_out {
                std::fs::write(p, cross_sections_csv(&inst, &r, sections))?;
                outputs.push(p.clone());
            }
            let transitive = r.is_transitive();
            let slope = slope.or(if inst.kernel.name == KernelName::LightconeBump {
                Some(inst.kernel.slope())
            } else {
                None
            });
            let mut summary =
                json!({"hat_pairs": hat.len(), "pairs": r.len(), "transitive": transitive});
            let mut pass = transitive;
            if let Some(k) = slope {
                let dil = sys.max_rounds as f64 * inst.kernel.range;
                let ret = retarded_cone_report(&inst, &sys, k, dil);
                let rel = relation_cone_report(&inst, &r, k, dil);
                pass &= ret.violations.is_empty();
                summary["cone"] = json!({"slope": k, "dilation": dil, "retarded_checked": ret.checked,
                    "retarded_violations": ret.violations.len(), "relation_violations": rel.violations.len()});
                if let Some(p) = report {
                    io::write_json(p, &json!({"retarded": ret, "relation": rel}))?;
                    outputs.push(p.clone());
                }
            }
            let mut o = Outcome::new(
                pass,
                &[gs],
                json!({"radius": radius, "slope": slope}),
                summary,
            );
            o.outputs = outputs;
            Ok(o)
        }
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Gen { .. } => "gen",
        Command::Critical { .. } => "critical",
        Command::CheckEl { .. } => "check-el",
        Command::Delta { .. } => "delta",
        Command::EnergyCheck { .. } => "energy-check",
        Command::Hyperbolicity { .. } => "hyperbolicity",
        Command::SolveLocal { .. } => "solve-local",
        Command::Glue { .. } => "glue",
        Command::Green { .. } => "green",
        Command::ExactSeq { .. } => "exact-seq",
        Command::Cones { .. } => "cones",
    }
}

/// Input files named on the command line, for manifests of failed runs.
fn command_inputs(cmd: &Command) -> Vec<PathBuf> {
    let v: Vec<&PathBuf> = match cmd {
        Command::Gen { .. } => vec![],
        Command::Critical { instance, .. } | Command::CheckEl { instance, .. } => vec![instance],
        Command::Delta { instance, jet, .. } => vec![instance, jet],
        Command::EnergyCheck {
            instance,
            lens,
            jet,
            ..
        } => vec![instance, lens, jet],
        Command::Hyperbolicity { instance, lens, .. } => vec![instance, lens],
        Command::SolveLocal {
            instance,
            lens,
            inhom,
            ..
        } => vec![instance, lens, inhom],
        Command::Glue {
            instance,
            covering,
            inhom,
            ..
        } => vec![instance, covering, inhom],
        Command::Green {
            instance, covering, ..
        } => vec![instance, covering],
        Command::ExactSeq { gs, .. } | Command::Cones { gs, .. } => vec![gs],
    };
    v.into_iter().cloned().collect()
}

/// Errors caused by the inputs rather than by a failing check.
fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Parse { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::InvalidInstance(_)
            | Error::Config(_)
            | Error::Lattice(_)
            | Error::Shape(_)
            | Error::NonFinite(_)
            | Error::NonPositiveStep(_)
            | Error::TimePeriodic
    )
}

fn init_threads() {
    if let Some(n) = std::env::var("CVP_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Runs the command line and returns the process exit code: 0 when the
/// pipeline passed, 1 when a check failed, 2 on usage or input errors.
pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let argv: Vec<OsString> = args.into_iter().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_threads();
    let start = Instant::now();
    let result = execute(&cli.command);
    let (code, outcome) = match result {
        Ok(o) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&o.report).unwrap_or_default()
            );
            (if o.pass { 0 } else { 1 }, Some(o))
        }
        Err(e) => {
            eprintln!("cvp {}: {e}", command_name(&cli.command));
            (if is_usage_error(&e) { 2 } else { 1 }, None)
        }
    };
    let (inputs, outputs, parameters) = match outcome {
        Some(o) => (o.inputs, o.outputs, o.params),
        None => (
            command_inputs(&cli.command),
            Vec::new(),
            serde_json::Value::Null,
        ),
    };
    let manifest = Manifest {
        tool: "cvp",
        version: env!("CARGO_PKG_VERSION"),
        command: command_name(&cli.command).to_string(),
        argv: argv
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
        inputs: inputs
            .iter()
            .filter_map(|p| InputDigest::of(p).ok())
            .collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        parameters,
        threads: rayon::current_num_threads(),
        exit_code: code,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    match (&cli.manifest, io::to_json(&manifest)) {
        (Some(p), Ok(s)) => {
            if let Err(e) = std::fs::write(p, s) {
                eprintln!("cvp: cannot write manifest {}: {e}", p.display());
                return 2;
            }
        }
        (None, Ok(s)) => eprint!("{s}"),
        (_, Err(e)) => eprintln!("cvp: manifest: {e}"),
    }
    code
}
