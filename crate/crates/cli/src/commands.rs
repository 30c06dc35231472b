use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use helm_mono::ntd::{first_basis_vectors, localized_potential, random_orthonormal};
use helm_mono::{
    count_k_eigs_above_one, d_of_q, identity_residual, io, monotonicity_check, pixel_grid,
    reconstruct, BoundaryBasis, Coefficient, Error, ForwardModel, HelmholtzSystem, Mesh, NeumannPencil,
    ReconstructOptions, Region,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{BasisKind, ConfigError, ExperimentConfig, SubspaceKind};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Domain(Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(Error::Io(e))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Domain(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(e) => match e {
                Error::Resonance { .. } => 3,
                Error::Ambiguity { .. } => 4,
                Error::Precondition(_)
                | Error::EmptySelection(_)
                | Error::RankDeficient
                | Error::BasisMismatch { .. }
                | Error::DimensionMismatch { .. } => 5,
                Error::InvalidParameter(_) | Error::Parse { .. } => 2,
                _ => 1,
            },
        }
    }
}

pub type CmdResult = Result<Vec<String>, CliError>;

/// Everything a subcommand needs besides the configuration.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub dump_matrices: bool,
}

impl Context {
    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn mesh(&self) -> Result<Mesh, CliError> {
        let c = &self.cfg;
        let mesh = Mesh::rectangle(c.domain, c.n, c.n)?;
        Ok(mesh.mark_sides(&c.sigma)?)
    }

    fn basis(&self, mesh: &Mesh) -> Result<BoundaryBasis, CliError> {
        Ok(match self.cfg.basis {
            BasisKind::Edges => BoundaryBasis::per_edge(mesh)?,
            BasisKind::Panels(p) => BoundaryBasis::panels(mesh, p)?,
        })
    }

    fn region(&self, mesh: &Mesh, key: &str, rect: Option<helm_mono::Rect>) -> Result<Option<Region>, CliError> {
        rect.map(|r| {
            Region::rect(mesh, r).map_err(|e| {
                CliError::Config(ConfigError {
                    line: 0,
                    key: key.into(),
                    message: e.to_string(),
                })
            })
        })
        .transpose()
    }

    fn dump(&self, mesh: &Mesh, q: &Coefficient) -> Result<Vec<String>, CliError> {
        if !self.dump_matrices {
            return Ok(Vec::new());
        }
        let sys = HelmholtzSystem::new(mesh, q, self.cfg.k)?;
        io::write_triplets(sys.stiffness(), self.create("stiffness.csv")?)?;
        io::write_triplets(sys.mass_q(), self.create("mass_q.csv")?)?;
        io::write_triplets(sys.matrix(), self.create("system.csv")?)?;
        Ok(vec!["stiffness.csv".into(), "mass_q.csv".into(), "system.csv".into()])
    }
}

fn write_kv<W: Write>(mut w: W, pairs: &[(&str, String)]) -> Result<(), CliError> {
    for (k, v) in pairs {
        writeln!(w, "{k} = {v}")?;
    }
    Ok(())
}

pub fn mesh(ctx: &Context) -> CmdResult {
    let mesh = ctx.mesh()?;
    mesh.write_text(ctx.create("mesh.txt")?)?;
    println!(
        "mesh: {} vertices, {} triangles, {} boundary edges ({} on sigma)",
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.boundary_edges().len(),
        mesh.sigma_edges().len()
    );
    Ok(vec!["mesh.txt".into()])
}

pub fn eigs(ctx: &Context) -> CmdResult {
    let mesh = ctx.mesh()?;
    let q = ctx.cfg.q.build(&mesh)?;
    let pencil = NeumannPencil::new(&mesh, &q, ctx.cfg.k)?;
    let res = pencil.largest(ctx.cfg.eig_count.min(mesh.n_vertices()), false)?;
    io::write_eigenvalues(&res.eigenvalues, ctx.create("eigenvalues.csv")?)?;
    println!(
        "eigs: {} largest Neumann eigenvalues, top {} ({} iterations)",
        res.eigenvalues.len(),
        io::fmt_f64(res.eigenvalues[0]),
        res.iterations
    );
    let mut files = vec!["eigenvalues.csv".to_string()];
    files.extend(ctx.dump(&mesh, &q)?);
    Ok(files)
}

pub fn dq(ctx: &Context) -> CmdResult {
    let mesh = ctx.mesh()?;
    let q = ctx.cfg.q.build(&mesh)?;
    let d = d_of_q(&mesh, &q, ctx.cfg.k, ctx.cfg.tol)?;
    let c = count_k_eigs_above_one(&mesh, &q, ctx.cfg.k, ctx.cfg.tol)?;
    write_kv(
        ctx.create("dq.txt")?,
        &[
            ("k", io::fmt_f64(ctx.cfg.k)),
            ("d_of_q", d.to_string()),
            ("count_k_eigs_above_one", c.to_string()),
        ],
    )?;
    println!("dq: d(q) = {d}, K-pencil count = {c}");
    if d != c {
        return Err(Error::Ambiguity {
            threshold: 0.0,
            tol: 0.0,
            detail: format!("inertia count {d} and K-pencil count {c} disagree"),
        }
        .into());
    }
    Ok(vec!["dq.txt".into()])
}

pub fn resonance_scan(ctx: &Context) -> CmdResult {
    let mesh = ctx.mesh()?;
    let q = ctx.cfg.q.build(&mesh)?;
    let (k0, k1, steps) = ctx.cfg.scan;
    let mut w = ctx.create("scan.csv")?;
    writeln!(w, "k,positive_count,nearest_eigenvalue,status")?;
    let mut rows: Vec<(f64, Option<usize>)> = Vec::with_capacity(steps);
    for s in 0..steps {
        let k = k0 + (k1 - k0) * s as f64 / (steps - 1) as f64;
        let pencil = NeumannPencil::new(&mesh, &q, k)?;
        let count = pencil.count_above(0.0);
        let nearest = pencil.nearest_zero(2);
        match (count, nearest) {
            (Ok(c), Ok(e)) => {
                let lam = e.eigenvalues.iter().copied().min_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(f64::NAN);
                let status = if lam.abs() <= ctx.cfg.resonance_tol { "near-resonant" } else { "ok" };
                writeln!(w, "{},{c},{},{status}", io::fmt_f64(k), io::fmt_f64(lam))?;
                rows.push((k, Some(c)));
            }
            (Err(Error::Resonance { .. }), _) | (_, Err(Error::Resonance { .. })) => {
                writeln!(w, "{},,{},resonant", io::fmt_f64(k), io::fmt_f64(0.0))?;
                rows.push((k, None));
            }
            (Err(e), _) | (_, Err(e)) => return Err(e.into()),
        }
    }
    w.flush()?;
    let mut b = ctx.create("brackets.csv")?;
    writeln!(b, "k_low,k_high,crossings")?;
    let mut n_brackets = 0;
    let known: Vec<(f64, usize)> = rows.iter().filter_map(|(k, c)| c.map(|c| (*k, c))).collect();
    for pair in known.windows(2) {
        let ((ka, ca), (kb, cb)) = (pair[0], pair[1]);
        if ca != cb {
            writeln!(b, "{},{},{}", io::fmt_f64(ka), io::fmt_f64(kb), ca.abs_diff(cb))?;
            n_brackets += 1;
        }
    }
    println!("resonance-scan: {steps} frequencies, {n_brackets} resonance brackets");
    Ok(vec!["scan.csv".into(), "brackets.csv".into()])
}

pub fn ntd(ctx: &Context) -> CmdResult {
    let mesh = ctx.mesh()?;
    let q = ctx.cfg.q.build(&mesh)?;
    let basis = ctx.basis(&mesh)?;
    let op = ForwardModel::new(&mesh, &q, ctx.cfg.k, &basis)?.ntd("Lambda(q)")?;
    io::write_symop(&op, ctx.create("ntd.csv")?)?;
    println!("ntd: {}x{} matrix on basis {:016x}", op.dim(), op.dim(), op.basis_id);
    let mut files = vec!["ntd.csv".to_string()];
    files.extend(ctx.dump(&mesh, &q)?);
    Ok(files)
}

pub fn identity_check(ctx: &Context) -> CmdResult {
    let mesh = ctx.mesh()?;
    let q1 = ctx.cfg.q.build(&mesh)?;
    let q2 = ctx.cfg.q2.build(&mesh)?;
    let basis = ctx.basis(&mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let g: Vec<f64> = (0..basis.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rep = identity_residual(&mesh, &q1, &q2, ctx.cfg.k, &basis, &g)?;
    write_kv(
        ctx.create("identity.txt")?,
        &[
            ("lhs", io::fmt_f64(rep.lhs)),
            ("rhs", io::fmt_f64(rep.rhs)),
            ("residual", io::fmt_f64(rep.residual)),
        ],
    )?;
    io::write_vector(&g, ctx.create("g.csv")?)?;
    println!("identity-check: residual {:e}", rep.residual);
    Ok(vec!["identity.txt".into(), "g.csv".into()])
}

pub fn monotonicity(ctx: &Context) -> CmdResult {
    let mesh = ctx.mesh()?;
    let q1 = ctx.cfg.q.build(&mesh)?;
    let q2 = ctx.cfg.q2.build(&mesh)?;
    let basis = ctx.basis(&mesh)?;
    let r = monotonicity_check(&mesh, &q1, &q2, ctx.cfg.k, &basis, ctx.cfg.tol)?;
    write_kv(
        ctx.create("monotonicity.txt")?,
        &[
            ("negative_count", r.negative_count.to_string()),
            ("indeterminate_count", r.indeterminate_count.to_string()),
            ("d_allowed", r.d_allowed.to_string()),
            ("tol_used", io::fmt_f64(r.tol_used)),
            ("basis_dim", r.basis_dim.to_string()),
            ("verdict", r.verdict.as_str().into()),
        ],
    )?;
    println!(
        "monotonicity-check: {} negative eigenvalues, d(q2) = {}, {}",
        r.negative_count,
        r.d_allowed,
        r.verdict.as_str()
    );
    Ok(vec!["monotonicity.txt".into()])
}

pub fn localize(ctx: &Context) -> CmdResult {
    let mesh = ctx.mesh()?;
    let q = ctx.cfg.q.build(&mesh)?;
    let basis = ctx.basis(&mesh)?;
    let b = ctx
        .region(&mesh, "localize.b", ctx.cfg.localize_b)?
        .ok_or_else(|| ConfigError {
            line: 0,
            key: "localize.b".into(),
            message: "localize needs a target box".into(),
        })?;
    let d = ctx.region(&mesh, "localize.d", ctx.cfg.localize_d)?;
    let v = match ctx.cfg.localize_v {
        SubspaceKind::First => first_basis_vectors(basis.dim(), ctx.cfg.v_dim)?,
        SubspaceKind::Random => random_orthonormal(basis.dim(), ctx.cfg.v_dim, ctx.cfg.seed)?,
    };
    let model = ForwardModel::new(&mesh, &q, ctx.cfg.k, &basis)?;
    let lp = localized_potential(&model, &b, d.as_ref(), &v)?;
    write_kv(
        ctx.create("localize.txt")?,
        &[
            ("basis_dim", basis.dim().to_string()),
            ("v_dim", v.ncols().to_string()),
            ("ratio", io::fmt_f64(lp.ratio)),
            ("energy_b", io::fmt_f64(lp.energy_b)),
            ("energy_d", io::fmt_f64(lp.energy_d)),
            ("beta", io::fmt_f64(lp.beta)),
            ("epsilon", io::fmt_f64(lp.epsilon)),
        ],
    )?;
    io::write_vector(lp.g.as_slice(), ctx.create("potential.csv")?)?;
    let field = model.field(&lp.g);
    io::write_vector(field.as_slice(), ctx.create("field.csv")?)?;
    println!("localize: ratio {:e} on basis dimension {}", lp.ratio, basis.dim());
    Ok(vec!["localize.txt".into(), "potential.csv".into(), "field.csv".into()])
}

pub fn reconstruct_cmd(ctx: &Context) -> CmdResult {
    let mesh = ctx.mesh()?;
    let q = ctx.cfg.q.build(&mesh)?;
    let basis = ctx.basis(&mesh)?;
    let (nx, ny) = ctx.cfg.grid;
    let grid = pixel_grid(&mesh, nx, ny)?;
    let opts = ReconstructOptions {
        contrast: ctx.cfg.contrast,
        alpha: ctx.cfg.alpha,
        tol: ctx.cfg.tol,
        bounds: ctx.cfg.bounds,
    };
    let r = reconstruct(&mesh, &q, ctx.cfg.k, &basis, &grid, &opts)?;
    io::write_reconstruction_csv(&r, ctx.create("reconstruction.csv")?)?;
    io::write_pgm(&r.mask(), nx, ny, ctx.create("mask.pgm")?)?;
    let trace: Vec<String> = r
        .alpha_trace
        .iter()
        .map(|(a, n)| format!("{}:{n}", io::fmt_f64(*a)))
        .collect();
    write_kv(
        ctx.create("reconstruction.txt")?,
        &[
            ("k", io::fmt_f64(r.k)),
            ("contrast", r.contrast.as_str().into()),
            ("alpha", io::fmt_f64(r.alpha)),
            ("d_max", r.d_max.to_string()),
            ("basis_dim", r.basis_dim.to_string()),
            ("tol", format!("{:?}", ctx.cfg.tol)),
            ("accepted", r.accepted_count().to_string()),
            ("alpha_trace", trace.join(" ")),
        ],
    )?;
    println!(
        "reconstruct: {} of {} pixels accepted (alpha {}, d_max {}, basis dimension {})",
        r.accepted_count(),
        r.tests.len(),
        r.alpha,
        r.d_max,
        r.basis_dim
    );
    Ok(vec!["reconstruction.csv".into(), "mask.pgm".into(), "reconstruction.txt".into()])
}

pub fn write_manifest(
    out: &Path,
    command: &str,
    threads: usize,
    config_echo: &str,
    files: &[String],
    elapsed: f64,
) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(out.join("manifest.txt"))?);
    writeln!(w, "command = {command}")?;
    writeln!(w, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "threads = {threads}")?;
    writeln!(w, "elapsed_seconds = {elapsed:.3}")?;
    writeln!(w, "files = {}", files.join(","))?;
    writeln!(w, "[config]")?;
    write!(w, "{config_echo}")?;
    Ok(())
}
