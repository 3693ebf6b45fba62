//! Black-box predictors and the learners that produce them.
//!
//! Everything downstream (ICE curves, lineups, plots) talks to a model only
//! through [`PredictorHandle::evaluate`], a pure batch call over row-major
//! feature rows.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::wire::{self, Transport, WireConfig};

mod backfit;
mod closed_form;
mod linear;
mod supersmooth;
mod trees;

pub use backfit::{backfit, BackfitOptions, BackfitResult, Smooth1d};
pub use closed_form::{closed_form, ClosedFormExpr};
pub use linear::{fit_linear, LinearModel};
pub use supersmooth::{supersmooth, supersmooth_with, SmootherConfig, SmootherFit, SPANS};
pub use trees::{fit_bagged_trees, BaggedTrees, TreeParams};

/// Anything that can score a batch of feature rows.
pub trait Predict: Send + Sync + fmt::Debug {
    fn n_features(&self) -> usize;

    /// `rows` is row-major with `n_features()` values per row.
    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    ClosedForm,
    BaggedTrees,
    LinearLeastSquares,
    Additive,
    ExternalProcess,
    ExternalTcp,
}

/// Shared, immutable handle on a fitted model.
#[derive(Clone)]
pub struct PredictorHandle {
    kind: PredictorKind,
    n_features: usize,
    metadata: BTreeMap<String, String>,
    inner: Arc<dyn Predict>,
}

impl fmt::Debug for PredictorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PredictorHandle")
            .field("kind", &self.kind)
            .field("n_features", &self.n_features)
            .field("metadata", &self.metadata)
            .finish()
    }
}

impl PredictorHandle {
    pub fn new(kind: PredictorKind, inner: Arc<dyn Predict>) -> Self {
        Self {
            kind,
            n_features: inner.n_features(),
            metadata: BTreeMap::new(),
            inner,
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }

    pub fn kind(&self) -> PredictorKind {
        self.kind
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    /// Scores `rows.len() / n_features` rows. Fails on ragged input, an empty
    /// batch, a wrong-length reply or non-finite outputs.
    pub fn evaluate(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let p = self.n_features;
        if rows.is_empty() {
            return Err(Error::invalid("empty prediction batch"));
        }
        if p == 0 || !rows.len().is_multiple_of(p) {
            return Err(Error::ArityMismatch {
                expected: p,
                found: rows.len(),
            });
        }
        let m = rows.len() / p;
        let out = self.inner.predict_rows(rows)?;
        if out.len() != m {
            return Err(Error::invalid(format!(
                "predictor returned {} values for {m} rows",
                out.len()
            )));
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("predictor returned a non-finite value"));
        }
        Ok(out)
    }

    pub fn evaluate_one(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::ArityMismatch {
                expected: self.n_features,
                found: row.len(),
            });
        }
        Ok(self.evaluate(row)?[0])
    }

    /// In-sample predictions for every row of `data`.
    pub fn predict_data(&self, data: &FeatureMatrix) -> Result<Vec<f64>> {
        if data.n_cols() != self.n_features {
            return Err(Error::ArityMismatch {
                expected: self.n_features,
                found: data.n_cols(),
            });
        }
        self.evaluate(&data.rows_flat())
    }
}

/// A recipe for producing a [`PredictorHandle`] from data.
///
/// String forms (used on the command line):
/// `bagged-trees:n=100,leaf=5[,mtry=2][,depth=12]`, `linear`,
/// `closed-form:<name>[:p1,p2,...]`, `additive[:s=<column>]`,
/// `external:cmd=<command line>`, `external:tcp=host:port[,batch=N][,timeout=SECS]`.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerSpec {
    BaggedTrees(TreeParams),
    Linear,
    ClosedForm {
        expr: ClosedFormExpr,
        params: Vec<f64>,
    },
    /// Supersmoother on one column plus least squares on the rest, fit by backfitting.
    Additive {
        s_column: Option<String>,
    },
    External(WireConfig),
}

impl LearnerSpec {
    /// Whether fitting actually looks at the response. Closed-form and
    /// external models ignore it.
    pub fn is_refittable(&self) -> bool {
        matches!(
            self,
            LearnerSpec::BaggedTrees(_) | LearnerSpec::Linear | LearnerSpec::Additive { .. }
        )
    }

    pub fn fit(&self, data: &FeatureMatrix, seed: u64) -> Result<PredictorHandle> {
        match self {
            LearnerSpec::BaggedTrees(params) => fit_bagged_trees(data, params, seed),
            LearnerSpec::Linear => fit_linear(data),
            LearnerSpec::ClosedForm { expr, params } => closed_form(*expr, params, data.n_cols()),
            LearnerSpec::Additive { s_column } => {
                let name = s_column
                    .as_deref()
                    .ok_or_else(|| Error::invalid("additive learner needs its smoothed column (additive:s=<name>)"))?;
                let split = crate::dataset::ColumnSplit::by_name(data, name)?;
                let fit = backfit(data, &split, &LearnerSpec::Linear, &BackfitOptions::default())?;
                Ok(fit.into_predictor())
            }
            LearnerSpec::External(cfg) => {
                let mut cfg = cfg.clone();
                cfg.n_features = data.n_cols();
                wire::handshake(&cfg)
            }
        }
    }

    /// Fills in the smoothed column of an `additive` learner that did not name one.
    pub fn bind_feature(&self, name: &str) -> LearnerSpec {
        match self {
            LearnerSpec::Additive { s_column: None } => LearnerSpec::Additive {
                s_column: Some(name.to_string()),
            },
            other => other.clone(),
        }
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerSpec::BaggedTrees(p) => {
                write!(f, "bagged-trees:n={},leaf={}", p.n_trees, p.min_leaf)?;
                if let Some(m) = p.m_try {
                    write!(f, ",mtry={m}")?;
                }
                if let Some(d) = p.max_depth {
                    write!(f, ",depth={d}")?;
                }
                Ok(())
            }
            LearnerSpec::Linear => f.write_str("linear"),
            LearnerSpec::ClosedForm { expr, params } => {
                write!(f, "closed-form:{expr}")?;
                if !params.is_empty() {
                    let p: Vec<String> = params.iter().map(f64::to_string).collect();
                    write!(f, ":{}", p.join(","))?;
                }
                Ok(())
            }
            LearnerSpec::Additive { s_column: None } => f.write_str("additive"),
            LearnerSpec::Additive { s_column: Some(s) } => write!(f, "additive:s={s}"),
            LearnerSpec::External(cfg) => match &cfg.transport {
                Transport::Stdio { command } => write!(f, "external:cmd={command}"),
                Transport::Tcp { host, port } => write!(
                    f,
                    "external:tcp={host}:{port},batch={},timeout={}",
                    cfg.batch_size,
                    cfg.timeout.as_secs_f64()
                ),
            },
        }
    }
}

fn parse_options(body: &str) -> Result<Vec<(&str, &str)>> {
    body.split(',')
        .filter(|s| !s.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::invalid(format!("expected key=value, got '{kv}'")))
        })
        .collect()
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("bad value '{v}' for '{key}'")))
}

impl FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, body) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "bagged-trees" | "trees" => {
                let mut p = TreeParams::default();
                for (k, v) in parse_options(body)? {
                    match k {
                        "n" | "trees" => p.n_trees = parse_num(k, v)?,
                        "leaf" | "min_leaf" => p.min_leaf = parse_num(k, v)?,
                        "mtry" => p.m_try = Some(parse_num(k, v)?),
                        "depth" => p.max_depth = Some(parse_num(k, v)?),
                        _ => return Err(Error::invalid(format!("unknown bagged-trees option '{k}'"))),
                    }
                }
                Ok(LearnerSpec::BaggedTrees(p))
            }
            "linear" if body.is_empty() => Ok(LearnerSpec::Linear),
            "closed-form" => {
                let (name, params) = body.split_once(':').unwrap_or((body, ""));
                let expr: ClosedFormExpr = name.parse()?;
                let params = params
                    .split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| parse_num::<f64>("param", t.trim()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(LearnerSpec::ClosedForm { expr, params })
            }
            "additive" => {
                let mut s_column = None;
                for (k, v) in parse_options(body)? {
                    match k {
                        "s" => s_column = Some(v.to_string()),
                        _ => return Err(Error::invalid(format!("unknown additive option '{k}'"))),
                    }
                }
                Ok(LearnerSpec::Additive { s_column })
            }
            "external" => {
                if let Some(cmd) = body.strip_prefix("cmd=") {
                    if cmd.trim().is_empty() {
                        return Err(Error::invalid("external:cmd= needs a command"));
                    }
                    return Ok(LearnerSpec::External(WireConfig::stdio(cmd.trim(), 0)));
                }
                let mut cfg: Option<WireConfig> = None;
                let mut batch = None;
                let mut timeout = None;
                for (k, v) in parse_options(body)? {
                    match k {
                        "tcp" => {
                            let (host, port) = v
                                .rsplit_once(':')
                                .ok_or_else(|| Error::invalid(format!("expected host:port, got '{v}'")))?;
                            cfg = Some(WireConfig::tcp(host, parse_num(k, port)?, 0));
                        }
                        "batch" => batch = Some(parse_num::<usize>(k, v)?),
                        "timeout" => timeout = Some(parse_num::<f64>(k, v)?),
                        _ => return Err(Error::invalid(format!("unknown external option '{k}'"))),
                    }
                }
                let mut cfg =
                    cfg.ok_or_else(|| Error::invalid("external learner needs cmd=<command> or tcp=host:port"))?;
                if let Some(b) = batch {
                    cfg.batch_size = b;
                }
                if let Some(t) = timeout {
                    if !(t > 0.0 && t.is_finite()) {
                        return Err(Error::invalid("timeout must be positive"));
                    }
                    cfg.timeout = Duration::from_secs_f64(t);
                }
                Ok(LearnerSpec::External(cfg))
            }
            _ => Err(Error::invalid(format!(
                "unknown learner '{s}' (expected bagged-trees, linear, closed-form, additive or external)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_learner_strings() {
        let spec: LearnerSpec = "bagged-trees:n=100,leaf=5".parse().unwrap();
        assert_eq!(
            spec,
            LearnerSpec::BaggedTrees(TreeParams {
                n_trees: 100,
                min_leaf: 5,
                ..TreeParams::default()
            })
        );
        assert_eq!("linear".parse::<LearnerSpec>().unwrap(), LearnerSpec::Linear);
        let cf: LearnerSpec = "closed-form:criss-cross-mean".parse().unwrap();
        assert!(matches!(
            cf,
            LearnerSpec::ClosedForm {
                expr: ClosedFormExpr::CrissCrossMean,
                ..
            }
        ));
        let cf: LearnerSpec = "closed-form:linear:1,2.5".parse().unwrap();
        assert!(matches!(cf, LearnerSpec::ClosedForm { ref params, .. } if params == &[1.0, 2.5]));
        match "external:tcp=127.0.0.1:9000,batch=50".parse::<LearnerSpec>().unwrap() {
            LearnerSpec::External(cfg) => {
                assert_eq!(cfg.batch_size, 50);
                assert!(matches!(cfg.transport, Transport::Tcp { port: 9000, .. }));
            }
            other => panic!("{other:?}"),
        }
        match "external:cmd=python3 serve.py --x=1,2".parse::<LearnerSpec>().unwrap() {
            LearnerSpec::External(cfg) => {
                assert!(
                    matches!(cfg.transport, Transport::Stdio { ref command } if command == "python3 serve.py --x=1,2")
                )
            }
            other => panic!("{other:?}"),
        }
        assert!("boosting".parse::<LearnerSpec>().is_err());
        assert!("bagged-trees:n=x".parse::<LearnerSpec>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "bagged-trees:n=30,leaf=2,mtry=1",
            "linear",
            "closed-form:product",
            "additive:s=x1",
        ] {
            let spec: LearnerSpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<LearnerSpec>().unwrap(), spec);
        }
    }
}
