use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Array1;
use num_complex::Complex64;

use shearlab::experiments::{
    measure_enhanced_dissipation, measure_inviscid_damping, sweep_threshold, DampingPlan,
    DissipationPlan, SweepPlan,
};
use shearlab::grid::forward_1d;
use shearlab::linear::{representation_crosscheck, LinearMode, RepresentationOptions};
use shearlab::multipliers::{
    audit_grid, audit_inequalities, zeta_rules_check, MultiplierSpec, Regime, DEFAULT_DELTA,
};
use shearlab::profile::{ProfileResolution, ShearProfile};
use shearlab::rayleigh::{global_verdict, stability_verdict, DEFAULT_TOLERANCE};
use shearlab::simulator::{run_simulation, Simulation, SimulationConfig, Verdict};

const EXIT_INVARIANT: u8 = 2;
const EXIT_BLOWUP: u8 = 3;

#[derive(Parser)]
#[command(
    name = "shearlab",
    version,
    about = "Stability experiments for monotone shear flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Checks monotonicity, support and Gevrey decay of a profile.
    CheckProfile {
        #[arg(long)]
        profile: String,
        #[arg(long, default_value_t = 1e-3)]
        nu: f64,
        #[arg(long, default_value_t = 512)]
        n_v: usize,
        #[arg(long, default_value_t = 10.0)]
        l_v: f64,
        /// Also run the Rayleigh spectral test.
        #[arg(long)]
        spectral: bool,
    },
    /// Rayleigh spectrum per wavenumber.
    Spectrum {
        #[arg(long)]
        profile: String,
        #[arg(long, default_value_t = 4)]
        k_max: i64,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Pointwise inequalities of the weights on an audit grid.
    MultiplierAudit {
        #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 1e-5])]
        nu: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [8.0, 32.0])]
        k_ghost: Vec<f64>,
        #[arg(long, default_value_t = 41)]
        n_t: usize,
        #[arg(long, default_value_t = 51)]
        n_k: usize,
        #[arg(long, default_value_t = 49)]
        n_eta: usize,
    },
    /// One mode of the linear profile driven by a Gaussian pulse.
    Linear {
        #[arg(long)]
        profile: String,
        #[arg(long, default_value_t = 1e-3)]
        nu: f64,
        #[arg(long, default_value_t = 1)]
        k: i64,
        #[arg(long, default_value_t = 3.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 256)]
        n_v: usize,
        #[arg(long, default_value_t = 10.0)]
        l_v: f64,
        /// Compare the end state with the representation formula.
        #[arg(long)]
        crosscheck: bool,
    },
    /// Runs a simulation from a TOML config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Diagnostics CSV; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Writes the final state in the binary field format.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
    /// Threshold sweep from a TOML plan.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
    /// Enhanced-dissipation rates.
    Dissipation {
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Inviscid-damping functionals.
    Damping {
        #[arg(long)]
        plan: Option<PathBuf>,
    },
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn output(path: &Option<PathBuf>) -> AnyResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_toml<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> AnyResult<T> {
    Ok(match path {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?)?,
        None => T::default(),
    })
}

fn gaussian_row(p: &ShearProfile, centre: f64, width: f64) -> Array1<Complex64> {
    let vals: Vec<Complex64> = p
        .v_points()
        .iter()
        .map(|&v| Complex64::new((-((v - centre) / width).powi(2)).exp(), 0.0))
        .collect();
    Array1::from(forward_1d(&vals))
}

fn execute(cmd: Command) -> AnyResult<u8> {
    let mut code = 0;
    match cmd {
        Command::CheckProfile {
            profile,
            nu,
            n_v,
            l_v,
            spectral,
        } => {
            let p = ShearProfile::from_spec(&profile, nu, ProfileResolution::for_v_box(n_v, l_v))?;
            let rep = p.check_assumption(spectral)?;
            print!("key,value\n{}", rep.to_text());
            if !rep.all_pass() {
                code = EXIT_INVARIANT;
            }
        }
        Command::Spectrum {
            profile,
            k_max,
            n,
            tolerance,
        } => {
            let p =
                ShearProfile::from_spec(&profile, 0.0, ProfileResolution::for_v_box(512, 10.0))?;
            let reports = stability_verdict(&p, 1..=k_max, tolerance, n)?;
            println!("k,max_imag,verdict,confirmed_re,confirmed_im");
            for r in &reports {
                let (cr, ci) = r
                    .confirmed
                    .map(|z| (z.re.to_string(), z.im.to_string()))
                    .unwrap_or_default();
                println!("{},{:.6e},{},{},{}", r.k, r.max_imag, r.verdict, cr, ci);
            }
            eprintln!("verdict: {}", global_verdict(&reports));
        }
        Command::MultiplierAudit {
            nu,
            k_ghost,
            n_t,
            n_k,
            n_eta,
        } => {
            println!("inequality,nu,k_ghost,points,violations,worst_margin,t,k,eta");
            for &n in &nu {
                let (t, k, e) = audit_grid(n, n_t, n_k, n_eta);
                for &kg in &k_ghost {
                    for l in audit_inequalities(n, kg, &t, &k, &e)? {
                        let (a, b, c) = l.worst_at;
                        println!(
                            "{},{:e},{},{},{},{:.6e},{:.6e},{},{:.6e}",
                            l.name,
                            l.nu,
                            l.k_ghost,
                            l.points,
                            l.violations,
                            l.worst_margin,
                            a,
                            b,
                            c
                        );
                        if !l.passed() {
                            code = EXIT_INVARIANT;
                        }
                    }
                }
                let spec = MultiplierSpec::new(n, 32.0, DEFAULT_DELTA, 2.0, Regime::Long)?;
                let times: Vec<f64> = (0..100)
                    .map(|i| i as f64 * 0.1 * n.powf(-1.0 / 3.0))
                    .collect();
                let z = zeta_rules_check(&spec, 64, &times);
                println!(
                    "zeta_product,{n:e},32,{},{},,,,",
                    z.product_checked, z.product_violations
                );
                println!(
                    "zeta_commutator,{n:e},32,{},{},,,,",
                    z.commutator_checked, z.commutator_violations
                );
                if z.product_violations + z.commutator_violations > 0 {
                    code = EXIT_INVARIANT;
                }
            }
        }
        Command::Linear {
            profile,
            nu,
            k,
            t_end,
            dt,
            n_v,
            l_v,
            crosscheck,
        } => {
            let p = ShearProfile::from_spec(&profile, nu, ProfileResolution::for_v_box(n_v, l_v))?;
            let phi = gaussian_row(&p, 0.3, 1.0);
            let forcing =
                move |tau: f64| &phi * Complex64::new((-((tau - 1.0) / 0.4).powi(2)).exp(), 0.0);
            if crosscheck {
                let rep = representation_crosscheck(
                    &p,
                    k,
                    nu,
                    &forcing,
                    t_end,
                    dt,
                    &RepresentationOptions::default(),
                )?;
                println!("t,discrepancy\n{t_end},{:.6e}", rep.discrepancy);
            } else {
                let mut mode = LinearMode::new(&p, k, nu)?;
                let n = (t_end / dt).round().max(1.0) as usize;
                println!("t,norm_f");
                for _ in 0..n {
                    mode.step(dt, &forcing)?;
                    let norm = mode.f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    println!("{:.6},{:.10e}", mode.t, norm);
                }
            }
        }
        Command::Simulate {
            config,
            output: out,
            checkpoint,
            strict,
        } => {
            let cfg = SimulationConfig::load(&config)?;
            let sim = Simulation::new(cfg.clone())?;
            let rep = run_simulation(sim)?;
            rep.write_csv(output(&out)?)?;
            eprintln!("verdict: {} at t = {:.4}", rep.verdict, rep.t_final);
            if let Some(msg) = &rep.message {
                eprintln!("{msg}");
            }
            if let Some(path) = checkpoint {
                // The report carries no state; rerun deterministically to the final time.
                let mut sim = Simulation::new(cfg.clone())?;
                while sim.t < rep.t_final * (1.0 - 1e-12) {
                    sim.step(cfg.dt.min(rep.t_final - sim.t))?;
                }
                sim.write_checkpoint(&mut File::create(path)?)?;
            }
            if strict && rep.verdict == Verdict::BlowUp {
                code = EXIT_BLOWUP;
            }
        }
        Command::Sweep {
            plan,
            output_dir,
            strict,
        } => {
            let mut plan = SweepPlan::load(&plan)?;
            if output_dir.is_some() {
                plan.output_dir = output_dir;
            }
            let rep = sweep_threshold(&plan)?;
            if plan.output_dir.is_none() {
                rep.write_boundary_csv(io::stdout().lock())?;
            }
            eprintln!("{}", rep.summary());
            if rep.boundaries.iter().any(|b| !b.monotone) {
                code = EXIT_INVARIANT;
            }
            if strict && rep.points.iter().any(|p| p.verdict == Verdict::BlowUp) {
                code = EXIT_BLOWUP;
            }
        }
        Command::Dissipation { plan } => {
            let plan: DissipationPlan = load_toml(&plan)?;
            let rep = measure_enhanced_dissipation(&plan)?;
            rep.write_csv(io::stdout().lock())?;
            if let Some(f) = rep.nu_fit {
                eprintln!(
                    "slope of log lambda vs log nu: {:.4} (stderr {:.2e})",
                    f.slope, f.slope_stderr
                );
            }
            for (k, r, target) in &rep.k_ratios {
                eprintln!("k = {k}: lambda(k)/lambda(1) = {r:.4}, k^(2/3) = {target:.4}");
            }
        }
        Command::Damping { plan } => {
            let plan: DampingPlan = load_toml(&plan)?;
            let rep = measure_inviscid_damping(&plan)?;
            rep.write_csv(io::stdout().lock())?;
            for (nu, v) in &rep.oracle {
                eprintln!("oracle nu = {nu:e}: integral {v:.6e}");
            }
            eprintln!("oracle spread {:.2}%", 100.0 * rep.oracle_spread);
            let slope = |f: Option<shearlab::numerics::LineFit>| {
                f.map(|f| format!("{:.3}", f.slope)).unwrap_or("-".into())
            };
            eprintln!(
                "velocity slopes: u1 {}, u2 {}, |u| {}",
                slope(rep.u1_fit),
                slope(rep.u2_fit),
                slope(rep.velocity_fit)
            );
        }
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
