//! The run configuration file and its resolution into concrete objects.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use super::expr::parse_poly;
use super::CliError;
use crate::dbar_solve::{default_max_iters, CanonicalSolver, Normalization, SolveMode};
use crate::frame_solver::SolverConfig;
use crate::grid::io::{read_binary, read_csv};
use crate::grid::{GForm, GridDomain};
use crate::lie::LieAlgebra;
use crate::oracle::{case, manufactured_lambda, ManufacturedCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Check,
    Solve,
    Verify,
    Norms,
}

/// Where the Lie algebra comes from: a built-in name or a structure-constant file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraBlock {
    pub name: Option<String>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainBlock {
    pub n: Option<usize>,
    pub r: Option<f64>,
    pub h: f64,
    pub subdomain_fraction: f64,
}

impl Default for DomainBlock {
    fn default() -> Self {
        DomainBlock { n: None, r: None, h: 1.0 / 32.0, subdomain_fraction: 0.5 }
    }
}

/// The input form. Exactly one of `case`, `file` and `expression` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputBlock {
    pub case: Option<String>,
    pub file: Option<PathBuf>,
    /// One expression per component (`n` of them for a 1-form, one for a function).
    pub expression: Option<Vec<String>>,
    /// Form degree for expressions: 0 for functions, 1 for (0,1)-forms.
    pub degree: usize,
}

impl Default for InputBlock {
    fn default() -> Self {
        InputBlock { case: None, file: None, expression: None, degree: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbarBlock {
    /// Defaults to `cauchy` for n = 1 and `least_squares` for n = 2.
    pub mode: Option<SolveMode>,
    pub normalization: Option<Normalization>,
    pub cg_tolerance: f64,
    pub cg_max_iters: Option<usize>,
}

impl Default for DbarBlock {
    fn default() -> Self {
        DbarBlock { mode: None, normalization: None, cg_tolerance: 1e-10, cg_max_iters: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormsBlock {
    /// Grid spacings for the interior-estimate table; empty to skip it.
    pub refinements: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBlock {
    pub tolerance: f64,
    /// Tolerance used instead of `tolerance` for abelian algebras.
    pub abelian_tolerance: f64,
    pub jacobi_tolerance: f64,
    pub dexp_tolerance: f64,
    pub dexp_pairs: usize,
    /// Terms per random polynomial.
    pub terms: usize,
    /// Coefficient bound of the random polynomials.
    pub scale: f64,
    pub epsilon: f64,
    pub margin_floor: f64,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock {
            tolerance: 1e-3,
            abelian_tolerance: 1e-12,
            jacobi_tolerance: 1e-10,
            dexp_tolerance: 1e-6,
            dexp_pairs: 100,
            terms: 6,
            scale: 0.15,
            epsilon: 0.5,
            margin_floor: -0.02,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub algebra: AlgebraBlock,
    pub domain: DomainBlock,
    pub input: InputBlock,
    pub solver: SolverConfig,
    pub dbar: DbarBlock,
    pub norms: NormsBlock,
    pub verify: VerifyBlock,
}

/// A configuration with every source loaded.
pub struct Resolved {
    /// The configuration with derived values filled in, as embedded in reports.
    pub config: RunConfig,
    pub command: Command,
    pub algebra: Arc<LieAlgebra>,
    pub domain: GridDomain,
    pub input: Option<GForm>,
    pub case: Option<ManufacturedCase>,
    /// The exact solution when the input is a manufactured fixture.
    pub exact: Option<GForm>,
}

fn malformed<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Malformed(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(malformed)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Loads every source; relative paths are taken relative to `base`.
    pub fn resolve(mut self, base: &Path) -> Result<Resolved, CliError> {
        let command = self.command.ok_or_else(|| malformed("no command given (set `command` or pass --command)"))?;
        self.solver.validate().map_err(malformed)?;
        let sources = [self.input.case.is_some(), self.input.file.is_some(), self.input.expression.is_some()];
        let count = sources.iter().filter(|s| **s).count();
        if count > 1 {
            return Err(malformed("input: set exactly one of case, file, expression"));
        }
        if count == 0 && command != Command::Verify {
            return Err(malformed(format!("{command:?} needs an input form")));
        }
        let d = &self.domain;
        if !(d.h > 0.0) || !(d.subdomain_fraction > 0.0 && d.subdomain_fraction <= 1.0) {
            return Err(malformed("domain: h must be positive and subdomain_fraction in (0, 1]"));
        }
        let named = self.load_algebra(base)?;

        let (algebra, domain, input, case, exact) = if let Some(name) = self.input.case.clone() {
            let c = case(&name).map_err(malformed)?;
            if let Some(g) = &named {
                if g.id() != c.algebra.id() {
                    return Err(malformed(format!("fixture '{name}' uses {}, config names {}", c.algebra.id(), g.id())));
                }
            }
            if self.domain.n.is_some_and(|n| n != c.n) {
                return Err(malformed(format!("fixture '{name}' lives in n = {}", c.n)));
            }
            let dom = GridDomain::new(c.n, self.domain.r.unwrap_or(c.radius), self.domain.h, self.domain.subdomain_fraction)
                .map_err(malformed)?;
            let (u, lam) = manufactured_lambda(&c, &dom).map_err(malformed)?;
            (c.algebra.clone(), dom, Some(lam), Some(c), u)
        } else if let Some(file) = self.input.file.clone() {
            let path = base.join(file);
            let f = File::open(&path).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?;
            let form = if path.extension().is_some_and(|e| e == "csv") {
                read_csv(BufReader::new(f), named.as_ref())
            } else {
                read_binary(&mut BufReader::new(f), named.as_ref())
            }
            .map_err(malformed)?;
            (form.algebra().clone(), form.domain().clone(), Some(form), None, None)
        } else {
            let g = match named {
                Some(g) => g,
                None if count == 0 => Arc::new(LieAlgebra::heisenberg3()),
                None => return Err(malformed("expression input needs an [algebra] block")),
            };
            let n = self.domain.n.unwrap_or(1);
            if !(1..=2).contains(&n) {
                return Err(malformed("domain: n must be 1 or 2"));
            }
            let dom = GridDomain::new(n, self.domain.r.unwrap_or(1.0), self.domain.h, self.domain.subdomain_fraction)
                .map_err(malformed)?;
            let input = match &self.input.expression {
                Some(exprs) => {
                    let q = self.input.degree;
                    let want = match q {
                        0 => 1,
                        1 => n,
                        _ => return Err(malformed("input: degree must be 0 or 1")),
                    };
                    if exprs.len() != want {
                        return Err(malformed(format!("input: expected {want} expression(s), got {}", exprs.len())));
                    }
                    let polys = exprs.iter().map(|e| parse_poly(e, &g, n).map_err(malformed)).collect::<Result<Vec<_>, _>>()?;
                    Some(GForm::from_fn(&dom, &g, q, |c, z, o| polys[c].eval(z, o)).map_err(malformed)?)
                }
                None => None,
            };
            (g, dom, input, None, None)
        };

        if self.algebra.name.is_none() && self.algebra.file.is_none() {
            self.algebra.name = Some(algebra.id().to_string());
        }
        self.domain.n = Some(domain.n());
        self.domain.r = Some(domain.r());
        self.domain.h = domain.h();
        self.domain.subdomain_fraction = domain.subdomain_fraction();
        self.command = Some(command);
        Ok(Resolved { config: self, command, algebra, domain, input, case, exact })
    }

    fn load_algebra(&self, base: &Path) -> Result<Option<Arc<LieAlgebra>>, CliError> {
        match (&self.algebra.name, &self.algebra.file) {
            (Some(_), Some(_)) => Err(malformed("algebra: set either name or file, not both")),
            (Some(name), None) => Ok(Some(Arc::new(LieAlgebra::by_name(name).map_err(malformed)?))),
            (None, Some(file)) => Ok(Some(Arc::new(LieAlgebra::from_file(&base.join(file)).map_err(malformed)?))),
            (None, None) => Ok(None),
        }
    }
}

impl Resolved {
    pub fn canonical_solver(&self, dom: &GridDomain) -> Result<CanonicalSolver, CliError> {
        let b = &self.config.dbar;
        let (dm, dn) = match dom.n() {
            1 => (SolveMode::Cauchy, Normalization::MeanZero),
            _ => (SolveMode::LeastSquares, Normalization::MinimalNorm),
        };
        let iters = b.cg_max_iters.unwrap_or_else(|| default_max_iters(dom));
        CanonicalSolver::new(dom, b.mode.unwrap_or(dm), b.normalization.unwrap_or(dn), b.cg_tolerance, iters).map_err(malformed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_toml("command = \"solve\"\n[input]\ncase = \"abelian_1d\"\n").unwrap();
        assert_eq!(cfg.solver, SolverConfig::default());
        let r = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(r.command, Command::Solve);
        assert_eq!(r.config.domain.n, Some(1));
        assert!(r.input.is_some() && r.exact.is_some());
    }

    #[test]
    fn nested_blocks_parse() {
        let text = r#"
            command = "norms"
            seed = 3
            [algebra]
            name = "abelian(1)"
            [domain]
            n = 1
            h = 0.0625
            [input]
            expression = ["zbar*e1"]
            degree = 0
            [solver]
            kappa = 1.5
            epsilon_schedule = [1.0, 0.5]
            holder = { pairs = "exhaustive", seed = 2 }
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.solver.kappa.k, 1);
        assert_eq!(cfg.solver.holder.pairs, crate::holder::PairPolicy::Exhaustive);
        let again: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn malformed_configs_are_rejected() {
        let bad = [
            "command = \"fly\"",
            "command = \"check\"",
            "command = \"check\"\n[input]\ncase = \"abelian_1d\"\nexpression = [\"X\"]",
            "command = \"check\"\n[input]\ncase = \"nope\"",
            "command = \"solve\"\n[input]\ncase = \"abelian_1d\"\n[solver]\nepsilon_schedule = [0.5, 1.0]",
            "command = \"solve\"\n[input]\ncase = \"abelian_1d\"\n[solver]\nkappa = 1.0",
            "command = \"solve\"\n[input]\nexpression = [\"zbar*X\"]",
            "command = \"check\"\nbogus = 1",
        ];
        for text in bad {
            let r = RunConfig::from_toml(text).and_then(|c| c.resolve(Path::new(".")));
            assert!(matches!(r, Err(CliError::Malformed(_))), "{text}");
        }
    }
}
