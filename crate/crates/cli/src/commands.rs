use std::path::PathBuf;

use clap::Args;
use genmarket_core::gdn::SpotCheckConfig;
use genmarket_core::ou::sample_moments;
use genmarket_core::{
    build_training_set, efficient_portfolio, euler_maruyama_paths, evaluate_rcd, price_claim, train, ConditionalLaw,
    Error as CoreError, ExactLaw, GridSpec, MarginalPropagator, Payoff, PortfolioInput, Scenario,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::artifacts::{load_checkpoint, load_scenario, parse_json, Checkpoint, Loaded, OutDir};
use crate::error::{CliError, Result};
use crate::Common;

const CHECKPOINT: &str = "checkpoint.json";
const EVAL_SUMMARY: &str = "eval_summary.json";

struct Session {
    loaded: Loaded,
    out: OutDir,
    seed: u64,
}

impl Session {
    fn open(common: &Common) -> Result<Self> {
        let loaded = load_scenario(&common.scenario)?;
        let root = common
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(&loaded.scenario.output_dir));
        let out = OutDir::new(root, &loaded.hash)?;
        let seed = common.seed.unwrap_or(loaded.scenario.seed);
        Ok(Self { loaded, out, seed })
    }

    fn scenario(&self) -> &Scenario {
        &self.loaded.scenario
    }

    fn checkpoint(&self, path: Option<&PathBuf>) -> Result<Checkpoint> {
        let path = path.cloned().unwrap_or_else(|| self.out.path(CHECKPOINT));
        load_checkpoint(&path, &self.loaded)
    }

    fn exact(&self) -> Result<ExactLaw> {
        let mut law = ExactLaw::new(self.scenario().validate()?);
        law.quad_steps = self.scenario().quad_steps;
        Ok(law)
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn state_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

fn resolve_x(scn: &Scenario, x: Option<Vec<f64>>) -> Result<Vec<f64>> {
    let x = x.unwrap_or_else(|| scn.domain_center());
    if x.len() != scn.dimension {
        return Err(CliError::Usage(format!(
            "--x has {} coordinates, the scenario has dimension {}",
            x.len(),
            scn.dimension
        )));
    }
    Ok(x)
}

/// The network is only trained on `K × [δ, T]`.
fn require_inside(scn: &Scenario, x: &[f64], t: f64) -> Result<()> {
    if scn.contains(x, t) {
        Ok(())
    } else {
        Err(CoreError::Domain(format!(
            "query ({x:?}, {t}) lies outside the trained region K × [{}, {}]",
            scn.delta, scn.horizon
        ))
        .into())
    }
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Terminal time. Defaults to the horizon.
    #[arg(long)]
    t: Option<f64>,
    /// Initial state, comma separated. Defaults to the centre of the domain.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10_000)]
    n_paths: usize,
    #[arg(long, default_value_t = 1000)]
    n_steps: usize,
}

#[derive(Serialize)]
struct Moments {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SimulateSummary {
    t: f64,
    x0: Vec<f64>,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    exact: Moments,
    sample: Moments,
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let s = Session::open(&a.common)?;
    let scn = s.scenario();
    let coeffs = scn.validate_dynamics()?;
    let t = a.t.unwrap_or(scn.horizon);
    let x = resolve_x(scn, a.x)?;
    if a.n_paths < 2 {
        return Err(CoreError::Domain(format!("need at least 2 paths, got {}", a.n_paths)).into());
    }
    if !(t > 0.0 && t <= scn.horizon) {
        return Err(CoreError::Domain(format!("t must lie in (0, {}], got {t}", scn.horizon)).into());
    }
    let x0 = DVector::from_column_slice(&x);
    let prop = MarginalPropagator::new_psd(&coeffs, t, scn.quad_steps)?;
    let paths = euler_maruyama_paths(&coeffs, &x0, t, a.n_steps, a.n_paths, s.seed)?;
    let (sample_mean, sample_cov) = sample_moments(&paths);

    let path_csv = s.out.write_csv(
        "simulate_paths.csv",
        &[("t", t.to_string()), ("seed", s.seed.to_string())],
        &state_header(scn.dimension),
        paths.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()),
    )?;
    let summary = SimulateSummary {
        t,
        x0: x,
        n_paths: a.n_paths,
        n_steps: a.n_steps,
        seed: s.seed,
        exact: Moments {
            mean: prop.mean(&x0).iter().copied().collect(),
            cov: rows(prop.cov()),
        },
        sample: Moments {
            mean: sample_mean.iter().copied().collect(),
            cov: rows(&sample_cov),
        },
    };
    let json = s.out.write_json("simulate_exact.json", &summary)?;
    println!("wrote {} and {}", path_csv.display(), json.display());
    Ok(())
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_x: Option<usize>,
    #[arg(long)]
    n_t: Option<usize>,
}

pub fn fit(a: FitArgs) -> Result<()> {
    let s = Session::open(&a.common)?;
    let scn = s.scenario();
    let mut cfg = scn.training.clone();
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.n_x = a.n_x.unwrap_or(cfg.n_x);
    cfg.n_t = a.n_t.unwrap_or(cfg.n_t);
    let seed = a.common.seed.or(cfg.seed).unwrap_or(scn.seed);
    cfg.seed = Some(seed);
    cfg.validate()?;

    let pairs = build_training_set(scn, cfg.n_x, cfg.n_t, seed)?;
    let (params, report) = train(scn, &pairs, &cfg)?;

    let checkpoint = Checkpoint {
        tool_version: genmarket_core::VERSION.to_string(),
        scenario_hash: s.loaded.hash.clone(),
        seed,
        best_epoch: report.best_epoch,
        heldout_max_w2: report.heldout_max_w2,
        params,
    };
    let ck = s.out.write_raw_json(CHECKPOINT, &checkpoint)?;
    let csv = s.out.write_csv(
        "train_report.csv",
        &[
            ("seed", seed.to_string()),
            ("best_epoch", report.best_epoch.to_string()),
            ("heldout_max_w2", report.heldout_max_w2.to_string()),
            ("stopped_early", report.stopped_early.to_string()),
        ],
        &["epoch".into(), "surrogate_loss".into(), "heldout_max_w2".into()],
        report
            .records
            .iter()
            .map(|r| (r.epoch, r.surrogate_loss, r.heldout_max_w2)),
    )?;
    println!(
        "best epoch {} of {}: held-out max W2 {:.6}",
        report.best_epoch,
        report.records.len(),
        report.heldout_max_w2
    );
    println!("wrote {} and {}", ck.display(), csv.display());
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Defaults to `checkpoint.json` in the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    grid_x: usize,
    #[arg(long, default_value_t = 5)]
    grid_t: usize,
    /// Number of grid points checked by sampling both price laws.
    #[arg(long, default_value_t = 5)]
    spot_checks: usize,
    #[arg(long, default_value_t = 20_000)]
    spot_samples: usize,
}

#[derive(Serialize)]
struct SpotCheckOut {
    x: Vec<f64>,
    t: f64,
    w2: f64,
    s_law_bound: f64,
    empirical_w2: f64,
    regularization: Option<f64>,
    samples: usize,
}

#[derive(Serialize, Deserialize)]
struct EvalSummary {
    grid: GridSpec,
    points: usize,
    max_w2: f64,
    mean_w2: f64,
    lipschitz: f64,
    s_law_bound_max: f64,
    s_law_bound_mean: f64,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let s = Session::open(&a.common)?;
    let scn = s.scenario();
    let ck = s.checkpoint(a.checkpoint.as_ref())?;
    let grid = GridSpec {
        x_per_axis: a.grid_x,
        t_points: a.grid_t,
    };
    if grid.is_empty() {
        return Err(CliError::Usage("--grid-x and --grid-t must be positive".into()));
    }
    let spot = (a.spot_checks > 0).then_some(SpotCheckConfig {
        points: a.spot_checks,
        samples: a.spot_samples,
        seed: s.seed,
    });
    let report = evaluate_rcd(&ck.params, scn, &grid, spot)?;

    let mut header = state_header(scn.dimension);
    header.extend(["t", "w2", "s_law_bound"].map(String::from));
    let csv = s.out.write_csv(
        "eval_report.csv",
        &[
            ("max_w2", report.max_w2.to_string()),
            ("mean_w2", report.mean_w2.to_string()),
            ("lipschitz", report.lipschitz.to_string()),
            ("s_law_bound_max", report.s_law_bound_max.to_string()),
        ],
        &header,
        report.rows.iter().map(|r| {
            let mut v = r.x.clone();
            v.extend([r.t, r.w2, r.s_law_bound]);
            v
        }),
    )?;

    let spot_checks: Vec<SpotCheckOut> = report
        .spot_checks
        .iter()
        .map(|c| {
            let row = report
                .rows
                .iter()
                .find(|r| r.x == c.x && r.t == c.t)
                .expect("spot checks are grid points");
            SpotCheckOut {
                x: c.x.clone(),
                t: c.t,
                w2: row.w2,
                s_law_bound: row.s_law_bound,
                empirical_w2: c.empirical_w2,
                regularization: c.regularization,
                samples: c.samples,
            }
        })
        .collect();
    let summary = EvalSummary {
        grid,
        points: report.rows.len(),
        max_w2: report.max_w2,
        mean_w2: report.mean_w2,
        lipschitz: report.lipschitz,
        s_law_bound_max: report.s_law_bound_max,
        s_law_bound_mean: report.s_law_bound_mean,
    };
    let mut body = serde_json::to_value(&summary).expect("summary serializes");
    body["seed"] = s.seed.into();
    body["spot_checks"] = serde_json::to_value(&spot_checks).expect("spot checks serialize");
    let json = s.out.write_json(EVAL_SUMMARY, &body)?;
    println!(
        "max W2 {:.6} over {} points; price-law bound {:.6}",
        report.max_w2,
        report.rows.len(),
        report.s_law_bound_max
    );
    for c in &spot_checks {
        println!(
            "  spot ({:?}, {}): empirical {:.6} vs bound {:.6}",
            c.x, c.t, c.empirical_w2, c.s_law_bound
        );
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

#[derive(Args)]
pub struct PriceArgs {
    #[command(flatten)]
    common: Common,
    /// Network checkpoint. Defaults to `checkpoint.json` in the output directory.
    #[arg(long, conflicts_with = "exact")]
    checkpoint: Option<PathBuf>,
    /// Price under the exact marginal law instead of a network.
    #[arg(long)]
    exact: bool,
    /// Model W2 error. Read from the eval summary when omitted.
    #[arg(long, conflicts_with = "exact")]
    epsilon: Option<f64>,
    /// Eval summary providing the model error. Defaults to `eval_summary.json`
    /// in the output directory.
    #[arg(long, conflicts_with_all = ["exact", "epsilon"])]
    eval: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    /// Defaults to the horizon.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
}

#[derive(Deserialize)]
struct EvalHeader {
    scenario_hash: String,
    max_w2: f64,
}

pub fn price(a: PriceArgs) -> Result<()> {
    let s = Session::open(&a.common)?;
    let scn = s.scenario();
    let clip = scn.clip()?;
    let spec = scn
        .payoff
        .clone()
        .ok_or_else(|| CliError::Usage("scenario has no `payoff` section".into()))?;
    let payoff = Payoff::new(spec, &clip)?;
    let x = resolve_x(scn, a.x)?;
    let t = a.t.unwrap_or(scn.horizon);

    let (model, epsilon, estimate) = if a.exact {
        let law = s.exact()?;
        let est = price_claim(&law, &x, t, &payoff, a.n, s.seed, &clip, Some(0.0))?;
        ("exact", Some(0.0), est)
    } else {
        require_inside(scn, &x, t)?;
        let ck = s.checkpoint(a.checkpoint.as_ref())?;
        let epsilon = match a.epsilon {
            Some(e) => Some(e),
            None => {
                let path = a.eval.clone().unwrap_or_else(|| s.out.path(EVAL_SUMMARY));
                if path.exists() {
                    let header: EvalHeader = parse_json(&path)?;
                    if header.scenario_hash != s.loaded.hash {
                        return Err(CliError::Usage(format!(
                            "{} was produced for a different scenario",
                            path.display()
                        )));
                    }
                    Some(header.max_w2)
                } else if payoff.constant_value().is_some() {
                    None
                } else {
                    return Err(CoreError::Precondition(format!(
                        "no model error available: run `genmarket eval` first or pass --epsilon ({} not found)",
                        path.display()
                    ))
                    .into());
                }
            }
        };
        let est = price_claim(&ck.params, &x, t, &payoff, a.n, s.seed, &clip, epsilon)?;
        ("gdn", epsilon, est)
    };

    let body = serde_json::json!({
        "model": model,
        "x": x,
        "t": t,
        "payoff": payoff.spec,
        "lipschitz_norm": payoff.lipschitz_norm(),
        "epsilon": epsilon,
        "price": estimate.price,
        "se": estimate.standard_error,
        "bias_bound": estimate.certified_bias_bound,
        "n": estimate.n,
        "seed": estimate.seed,
    });
    let json = s.out.write_json("price.json", &body)?;
    println!(
        "price {:.6} ± {:.6} (se), bias bound {:.6}",
        estimate.price, estimate.standard_error, estimate.certified_bias_bound
    );
    println!("wrote {}", json.display());
    Ok(())
}

#[derive(Args)]
pub struct PortfolioArgs {
    #[command(flatten)]
    common: Common,
    /// Network checkpoint. Defaults to `checkpoint.json` in the output
    /// directory unless the scenario gives explicit `mu` and `sigma`.
    #[arg(long, conflicts_with = "exact")]
    checkpoint: Option<PathBuf>,
    /// Use the exact marginal law at `(x, t)`.
    #[arg(long)]
    exact: bool,
    /// Risk tolerance. Overrides the scenario's `portfolio.gamma`.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    #[arg(long)]
    t: Option<f64>,
}

pub fn portfolio(a: PortfolioArgs) -> Result<()> {
    let s = Session::open(&a.common)?;
    let scn = s.scenario();
    let query = scn.portfolio.clone();
    let gamma = a
        .gamma
        .or(query.as_ref().map(|q| q.gamma))
        .ok_or_else(|| CliError::Usage("pass --gamma or add a `portfolio` section to the scenario".into()))?;
    let explicit = query
        .as_ref()
        .and_then(|q| Some((q.mu.clone()?, q.sigma.clone()?)))
        .filter(|_| !a.exact && a.checkpoint.is_none() && a.x.is_none() && a.t.is_none());

    let (source, point, input) = if let Some((mu, sigma)) = explicit {
        let d = mu.len();
        if sigma.len() != d || sigma.iter().any(|r| r.len() != d) {
            return Err(CoreError::Config {
                field: "portfolio.sigma".into(),
                message: format!("must be {d}×{d}"),
            }
            .into());
        }
        let sigma = DMatrix::from_row_iterator(d, d, sigma.into_iter().flatten());
        (
            "explicit",
            None,
            PortfolioInput::new(gamma, DVector::from_vec(mu), sigma)?,
        )
    } else {
        let x = resolve_x(scn, a.x.or(query.as_ref().and_then(|q| q.x.clone())))?;
        let t = a.t.or(query.as_ref().and_then(|q| q.t)).unwrap_or(scn.horizon);
        let (source, law) = if a.exact {
            ("exact", s.exact()?.law(&DVector::from_column_slice(&x), t)?)
        } else {
            require_inside(scn, &x, t)?;
            let ck = s.checkpoint(a.checkpoint.as_ref())?;
            ("gdn", ck.params.law(&DVector::from_column_slice(&x), t)?)
        };
        let (mu, sigma) = law.into_parts();
        (source, Some((x, t)), PortfolioInput::new(gamma, mu, sigma)?)
    };
    let w = efficient_portfolio(&input)?;

    let mut body = serde_json::json!({
        "source": source,
        "gamma": gamma,
        "mu": input.mu.as_slice(),
        "sigma": rows(&input.sigma),
        "weights": w.as_slice(),
        "expected_return": input.mu.dot(&w),
        "variance": (&input.sigma * &w).dot(&w),
        "budget": w.sum(),
    });
    if let Some((x, t)) = point {
        body["x"] = x.into();
        body["t"] = t.into();
    }
    let json = s.out.write_json("portfolio.json", &body)?;
    println!("weights {:?}", w.as_slice());
    println!("wrote {}", json.display());
    Ok(())
}
