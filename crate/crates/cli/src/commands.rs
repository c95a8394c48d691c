use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nnem::analysis::{compute_errors, diagnostics, ConvergenceTable};
use nnem::envelope::partition_functions;
use nnem::solver::{checkpoint_load, checkpoint_save};
use nnem::{
    convergence_study, fem_solve, gauss_legendre_1d, loss_parameter_gradient, ritz_loss, Error, MeshKind, Method,
    NNElementSpace, NetConfig, TrainConfig, Trainer,
};

use crate::config::{MeshSpec, RunConfig};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_SELF_TEST: i32 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::TrainingDiverged { .. } | Error::NonFiniteLoss { .. } => EXIT_DIVERGED,
            Error::InvalidArgument(_)
            | Error::MeshParse { .. }
            | Error::Orientation { .. }
            | Error::DegenerateTriangle { .. }
            | Error::NonConforming(_)
            | Error::BoundaryFlags(_)
            | Error::MissingDirichletData
            | Error::BoundaryRankDeficient(_)
            | Error::Checkpoint(_)
            | Error::ConfigMismatch { .. } => EXIT_CONFIG,
            _ => EXIT_OTHER,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure { code: EXIT_OTHER, message: format!("{}: {e}", path.display()) }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(io(path))
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(io(dir))
}

fn report_text(fields: &[(&str, String)]) -> String {
    fields.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn fem_loss(cfg: &RunConfig, mesh: std::sync::Arc<nnem::Mesh>) -> Result<f64, Failure> {
    let problem = cfg.problem();
    let space = NNElementSpace::fem(mesh, cfg.family, cfg.bc)?;
    let trainer = Trainer::new(space, &problem, &cfg.rule(), TrainConfig { max_steps: 0, ..cfg.train })?;
    Ok(trainer.solve()?.1)
}

pub fn solve(cfg: &RunConfig, resume: Option<&Path>) -> Result<(), Failure> {
    let start = Instant::now();
    let problem = cfg.problem();
    let rule = cfg.rule();
    let mesh = cfg.mesh(cfg.mesh_n).map_err(Failure::config)?;
    let text = cfg.canonical_text();
    let space = NNElementSpace::build(mesh.clone(), cfg.family, cfg.net, cfg.bc, cfg.train.seed, cfg.augment)?;
    let mut trainer = match resume {
        Some(path) => {
            let state = checkpoint_load(path, &text)?;
            Trainer::resume(space, &problem, &rule, cfg.train, state)?
        }
        None => Trainer::new(space, &problem, &rule, cfg.train)?,
    };
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let ckpt = dir.join("checkpoint.bin");
    let label = nnem::Method::Nnem { net: cfg.net, augment: cfg.augment, train: cfg.train }.label(cfg.family);

    while trainer.state.step < cfg.train.max_steps {
        if let Err(e) = trainer.step() {
            checkpoint_save(&ckpt, &trainer.state, &text)?;
            write(&dir.join("history.csv"), &trainer.state.history_csv())?;
            return Err(e.into());
        }
    }
    let loss = match trainer.finalize() {
        Ok(l) => l,
        Err(e) => {
            checkpoint_save(&ckpt, &trainer.state, &text)?;
            return Err(e.into());
        }
    };
    let reference = fem_loss(cfg, mesh.clone())?;
    let (solution, state) = trainer.into_parts();
    checkpoint_save(&ckpt, &state, &text)?;
    write(&dir.join("history.csv"), &state.history_csv())?;

    let mut fields = vec![
        ("method", label),
        ("problem", cfg.problem.clone()),
        ("h", format!("{:e}", mesh.h)),
        ("N", solution.space.dim().to_string()),
        ("steps", state.step.to_string()),
        ("loss", format!("{loss:e}")),
        ("fem_loss", format!("{reference:e}")),
    ];
    if problem.has_exact() {
        let r = compute_errors(&solution, &problem, &rule)?;
        fields.push(("e_H1", format!("{:e}", r.e_h1)));
        fields.push(("e_L2", format!("{:e}", r.e_l2)));
    }
    fields.push(("seconds", format!("{:.3}", start.elapsed().as_secs_f64())));
    let report = report_text(&fields);
    write(&dir.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn baseline(cfg: &RunConfig) -> Result<(), Failure> {
    let problem = cfg.problem();
    let rule = cfg.rule();
    let mesh = cfg.mesh(cfg.mesh_n).map_err(Failure::config)?;
    let (sol, r) = fem_solve(mesh.clone(), cfg.family, &problem, cfg.bc, &rule)?;
    let loss = fem_loss(cfg, mesh)?;
    let mut fields = vec![
        ("method", Method::Fem.label(cfg.family)),
        ("problem", cfg.problem.clone()),
        ("h", format!("{:e}", r.h)),
        ("N", sol.space.dim().to_string()),
        ("loss", format!("{loss:e}")),
    ];
    if problem.has_exact() {
        fields.push(("e_H1", format!("{:e}", r.e_h1)));
        fields.push(("e_L2", format!("{:e}", r.e_l2)));
    }
    fields.push(("seconds", format!("{:.3}", r.seconds)));
    let report = report_text(&fields);
    prepare_dir(&cfg.output_dir)?;
    write(&cfg.output_dir.join("baseline.txt"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn study(cfg: &RunConfig) -> Result<(), Failure> {
    let kind = match cfg.mesh_kind {
        Some(MeshSpec::UnitSquare) => MeshKind::UnitSquare,
        Some(MeshSpec::LShape) => MeshKind::LShape,
        None => return Err(Failure::config("studies need a generated mesh (`mesh.kind` unit_square or l_shape)")),
    };
    if cfg.study_methods.is_empty() {
        return Err(Failure::config("`study.methods` is empty"));
    }
    let problem = cfg.problem();
    if !problem.has_exact() {
        return Err(Failure::config(format!("problem \"{}\" has no exact solution to measure errors against", cfg.problem)));
    }
    let rule = cfg.rule();
    let mut tables = Vec::new();
    for m in &cfg.study_methods {
        let (method, sizes) = match m.as_str() {
            "fem" => (Method::Fem, &cfg.study_sizes),
            _ => (Method::Nnem { net: cfg.net, augment: cfg.augment, train: cfg.train }, &cfg.study_nnem_sizes),
        };
        let key = if m == "fem" { "study.sizes" } else { "study.nnem_sizes" };
        if sizes.len() < 2 {
            return Err(Failure::config(format!("`{key}` needs at least 2 mesh sizes, got {}", sizes.len())));
        }
        tables.push(convergence_study(&problem, cfg.family, cfg.bc, kind, sizes, &method, &rule)?);
    }
    prepare_dir(&cfg.output_dir)?;
    for t in &tables {
        write(&cfg.output_dir.join(format!("{}.csv", t.method)), &t.to_csv())?;
    }
    let cmp = comparison_csv(&tables);
    write(&cfg.output_dir.join("comparison.csv"), &cmp)?;
    print!("{}", render_table(&tables));
    Ok(())
}

/// `h` followed by `e_H1` and `e_L2` per method, blank where a method has no row.
pub fn comparison_csv(tables: &[ConvergenceTable]) -> String {
    let mut hs: Vec<f64> = tables.iter().flat_map(|t| t.rows.iter().map(|r| r.h)).collect();
    hs.sort_by(|a, b| b.total_cmp(a));
    hs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let mut s = String::from("h");
    for t in tables {
        write!(s, ",{0}_e_H1,{0}_e_L2", t.method).unwrap();
    }
    s.push('\n');
    for h in hs {
        write!(s, "{h:e}").unwrap();
        for t in tables {
            match t.rows.iter().find(|r| (r.h - h).abs() <= 1e-12 * h) {
                Some(r) => write!(s, ",{:e},{:e}", r.e_h1, r.e_l2).unwrap(),
                None => s.push_str(",,"),
            }
        }
        s.push('\n');
    }
    s
}

/// Aligned text version of the comparison table.
pub fn render_table(tables: &[ConvergenceTable]) -> String {
    let csv = comparison_csv(tables);
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        for (j, cell) in line.split(',').enumerate() {
            let cell = if i > 0 && !cell.is_empty() {
                let v: f64 = cell.parse().unwrap_or(f64::NAN);
                if j == 0 { format!("{v:.5}") } else { format!("{v:.3e}") }
            } else {
                cell.to_string()
            };
            write!(out, "{cell:>14}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Reads per-method study CSVs and prints the combined table.
pub fn table(files: &[PathBuf]) -> Result<(), Failure> {
    if files.is_empty() {
        return Err(Failure::config("no CSV files given"));
    }
    let mut tables = Vec::new();
    for path in files {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let headers = rdr.headers().map_err(|e| Failure::config(format!("{}: {e}", path.display())))?.clone();
        if headers.iter().collect::<Vec<_>>().join(",") != nnem::analysis::CSV_HEADER {
            return Err(Failure::config(format!("{}: not a study CSV", path.display())));
        }
        let mut method = String::new();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            let num = |i: usize| -> Result<f64, Failure> {
                rec[i].parse().map_err(|_| Failure::config(format!("{}: bad number `{}`", path.display(), &rec[i])))
            };
            method = rec[0].to_string();
            rows.push(nnem::ErrorReport {
                h: num(1)?,
                n: num(2)? as usize,
                e_h1: num(3)?,
                e_l2: num(4)?,
                steps: num(7)? as usize,
                seconds: if rec[8].is_empty() { 0.0 } else { num(8)? },
            });
        }
        tables.push(ConvergenceTable::from_reports(&method, &rows));
    }
    print!("{}", render_table(&tables));
    Ok(())
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

pub fn check(cfg: &RunConfig) -> Result<(), Failure> {
    let mut checks = Vec::new();
    let rule = cfg.rule();
    let problem = cfg.problem();

    match cfg.mesh(cfg.mesh_n) {
        Err(e) => checks.push(Check { name: "mesh regularity", pass: false, detail: e }),
        Ok(mesh) => {
            let angle = mesh.min_angle().to_degrees();
            let valid = mesh.validate();
            checks.push(Check {
                name: "mesh regularity",
                pass: valid.is_ok() && angle >= 1.0,
                detail: match valid {
                    Ok(()) => format!("min angle {angle:.3} deg, shape regularity {:.4}, h {:.5}", mesh.shape_regularity(), mesh.h),
                    Err(e) => e.to_string(),
                },
            });
            if angle > 0.0 {
                match diagnostics(&mesh, cfg.family, &rule) {
                    Ok(d) => {
                        let pou = partition_functions(&mesh, cfg.family);
                        let mut worst: f64 = 0.0;
                        for t in 0..mesh.n_triangles() {
                            for lam in &rule.points {
                                match pou.eval(t, lam) {
                                    Ok(v) => worst = worst.max((v.iter().map(|p| p.1).sum::<f64>() - 1.0).abs()),
                                    Err(_) => worst = f64::INFINITY,
                                }
                            }
                        }
                        checks.push(Check {
                            name: "partition of unity",
                            pass: worst <= 1e-12,
                            detail: format!(
                                "max |sum psi - 1| {worst:.2e}; overlap M {}, C_inf {:.4}, C_G {:.4}",
                                d.overlap, d.c_inf, d.c_grad
                            ),
                        });
                    }
                    Err(e) => checks.push(Check { name: "partition of unity", pass: false, detail: e.to_string() }),
                }
            }
        }
    }

    let q = rule.monomial_error(5);
    let edge = gauss_legendre_1d(cfg.train.edge_points)?;
    let q1 = (0..2 * edge.len())
        .map(|k| (edge.integrate(|x| x.powi(k as i32)) * (k as f64 + 1.0) - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "quadrature exactness",
        pass: q <= 1e-13 && q1 <= 1e-13,
        detail: format!("{}-point rule, degree <= 5 error {q:.2e}; {}-point edge rule error {q1:.2e}", rule.len(), edge.len()),
    });

    let (err, n) = gradient_self_test(cfg, &problem, &rule)?;
    checks.push(Check {
        name: "gradient",
        pass: err <= 1e-5,
        detail: format!("worst relative error {err:.2e} over {n} parameters vs central differences"),
    });

    let mut failed = Vec::new();
    for c in &checks {
        println!("check {}: {} ({})", c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail);
        if !c.pass {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_SELF_TEST, message: format!("self-test failed: {}", failed.join(", ")) })
    }
}

/// Parameter gradient against central differences on a width-3, one-cell instance.
fn gradient_self_test(
    cfg: &RunConfig,
    problem: &nnem::EllipticProblem,
    rule: &nnem::TriangleRule,
) -> Result<(f64, usize), Failure> {
    let mesh = std::sync::Arc::new(nnem::Mesh::unit_square(1)?);
    let net = NetConfig { width: 3, ..cfg.net };
    let bc = nnem::BoundaryCondition::None;
    let space = NNElementSpace::build(mesh, cfg.family, net, bc, cfg.train.seed, true)?;
    let sys = nnem::assemble(&space, problem, rule)?;
    let c = nalgebra::DVector::from_fn(space.dim(), |i, _| ((i as f64 + 1.0) * 0.7).sin());
    let g = loss_parameter_gradient(&space, problem, rule, &c)?;
    let l0 = ritz_loss(&sys, &c)?;
    let step = 1e-5;
    let noise = 8.0 * f64::EPSILON * l0.abs().max(1.0) / step;
    let theta = space.theta();
    let mut probe = space.clone();
    let mut worst: f64 = 0.0;
    let mut loss_at = |t: &[f64]| -> Result<f64, Failure> {
        probe.set_theta(t)?;
        Ok(ritz_loss(&nnem::assemble(&probe, problem, rule)?, &c)?)
    };
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] += step;
        let lp = loss_at(&t)?;
        t[i] = theta[i] - step;
        let lm = loss_at(&t)?;
        let fd = (lp - lm) / (2.0 * step);
        let diff = ((fd - g[i]).abs() - noise).max(0.0);
        if diff > 0.0 {
            worst = worst.max(diff / fd.abs().max(g[i].abs()));
        }
    }
    Ok((worst, theta.len()))
}
