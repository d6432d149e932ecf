//! Lagged panels, per-treatment OLS reaction functions with pair-clustered
//! (CR1) covariance, cross-treatment Wald tests and descriptive summaries.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::agents::{LaggedState, Regressor};
use crate::game_core::{EndowmentMode, RoundRecord, Sequence, TreatmentId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconError {
    #[error("log contains no records for treatment {0}")]
    MissingTreatment(TreatmentId),
    #[error("log contains no records for sequence {0}")]
    MissingSequence(Sequence),
    #[error("design matrix is rank deficient at column {index} ({name})")]
    RankDeficient { index: usize, name: String },
    #[error("need at least {needed} rows for {columns} columns, got {rows}")]
    TooFewRows {
        rows: usize,
        columns: usize,
        needed: usize,
    },
    #[error("clustered inference needs at least 2 clusters, got {0}")]
    TooFewClusters(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("combined covariance is singular")]
    SingularCovariance,
    #[error("inconsistent log: {0}")]
    InconsistentLog(String),
    #[error("CSV error: {0}")]
    Csv(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Outcome {
    #[serde(rename = "#Shared")]
    Shared,
    #[serde(rename = "Falsified")]
    Falsified,
    #[serde(rename = "Accuracy")]
    Accuracy,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Shared, Outcome::Falsified, Outcome::Accuracy];

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Shared => "#Shared",
            Outcome::Falsified => "Falsified",
            Outcome::Accuracy => "Accuracy",
        }
    }
}

/// Unique-count lags enter only where endowments can overlap.
pub fn default_regressors(treatment: TreatmentId) -> Vec<Regressor> {
    let mut r = vec![
        Regressor::OwnShared,
        Regressor::OtherShared,
        Regressor::OwnFalsified,
        Regressor::OtherFalsified,
        Regressor::OwnAccuracy,
        Regressor::OtherAccuracy,
    ];
    if treatment.endowment_mode() == EndowmentMode::WithReplacement {
        r.push(Regressor::OwnUnique);
        r.push(Regressor::OtherUnique);
    }
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct PanelRow {
    pub session_id: u64,
    pub sequence: Sequence,
    pub pair_id: u32,
    pub round: u32,
    pub player_id: u32,
    pub shared: f64,
    pub falsified: f64,
    pub accuracy: f64,
    pub lags: LaggedState,
    /// Dense cluster index for the (session, sequence, pair) key.
    pub cluster: usize,
}

impl PanelRow {
    pub fn outcome(&self, o: Outcome) -> f64 {
        match o {
            Outcome::Shared => self.shared,
            Outcome::Falsified => self.falsified,
            Outcome::Accuracy => self.accuracy,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    pub treatment: TreatmentId,
    pub rows: Vec<PanelRow>,
    pub n_clusters: usize,
}

impl PanelDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Intercept column followed by one column per regressor.
    pub fn design(&self, regressors: &[Regressor]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), regressors.len() + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                self.rows[i].lags.value(regressors[j - 1])
            }
        })
    }

    pub fn outcome(&self, o: Outcome) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.outcome(o)))
    }

    pub fn clusters(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.cluster).collect()
    }
}

type RoundKey = (u64, Sequence, u32, u32);

/// Player rows for rounds 2 to 16 with lags taken from round r − 1 of the
/// same pair.
pub fn build_panel(records: &[RoundRecord], treatment: TreatmentId) -> Result<PanelDataset, EconError> {
    let mut by_round: HashMap<RoundKey, Vec<&RoundRecord>> = HashMap::new();
    for r in records.iter().filter(|r| r.treatment == treatment) {
        by_round
            .entry((r.session_id, r.sequence, r.pair_id, r.round))
            .or_default()
            .push(r);
    }
    if by_round.is_empty() {
        return Err(EconError::MissingTreatment(treatment));
    }
    for (k, v) in &by_round {
        if v.len() != 2 || v[0].player_id == v[1].player_id {
            return Err(EconError::InconsistentLog(format!(
                "session {} pair {} round {} has {} player rows",
                k.0,
                k.2,
                k.3,
                v.len()
            )));
        }
    }
    let mut cluster_index: BTreeMap<(u64, Sequence, u32), usize> = BTreeMap::new();
    for k in by_round.keys() {
        cluster_index.insert((k.0, k.1, k.2), 0);
    }
    for (i, v) in cluster_index.values_mut().enumerate() {
        *v = i;
    }

    let mut rows = Vec::new();
    for r in records.iter().filter(|r| r.treatment == treatment && r.round >= 2) {
        let prev = by_round
            .get(&(r.session_id, r.sequence, r.pair_id, r.round - 1))
            .ok_or_else(|| {
                EconError::InconsistentLog(format!(
                    "session {} pair {} lacks round {}",
                    r.session_id,
                    r.pair_id,
                    r.round - 1
                ))
            })?;
        let own = prev.iter().find(|p| p.player_id == r.player_id).ok_or_else(|| {
            EconError::InconsistentLog(format!(
                "player {} absent from pair {} in round {}",
                r.player_id,
                r.pair_id,
                r.round - 1
            ))
        })?;
        let other = prev.iter().find(|p| p.player_id != r.player_id).expect("two players");
        let bit = |b: bool| if b { 1.0 } else { 0.0 };
        rows.push(PanelRow {
            session_id: r.session_id,
            sequence: r.sequence,
            pair_id: r.pair_id,
            round: r.round,
            player_id: r.player_id,
            shared: r.shared_count as f64,
            falsified: bit(r.falsified),
            accuracy: bit(r.accuracy),
            lags: LaggedState {
                own_shared_lag: own.shared_count as f64,
                own_falsified_lag: own.falsified,
                other_shared_lag: other.shared_count as f64,
                other_falsified_lag: other.falsified,
                own_accuracy_lag: own.accuracy,
                other_accuracy_lag: other.accuracy,
                own_unique_lag: own.unique_count as f64,
                other_unique_lag: other.unique_count as f64,
                first_round: false,
            },
            cluster: cluster_index[&(r.session_id, r.sequence, r.pair_id)],
        });
    }
    Ok(PanelDataset {
        treatment,
        rows,
        n_clusters: cluster_index.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
}

/// Least squares through a thin QR factorisation. A column whose diagonal
/// of R is negligible relative to its own norm is reported as deficient.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit, EconError> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(EconError::Dimension(format!("X has {n} rows, y has {}", y.len())));
    }
    if n < k || k == 0 {
        return Err(EconError::TooFewRows {
            rows: n,
            columns: k,
            needed: k.max(1),
        });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= 1e-10 * norm {
            return Err(EconError::RankDeficient {
                index: j,
                name: format!("column {j}"),
            });
        }
    }
    let qty = qr.q().transpose() * y;
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or(EconError::RankDeficient {
            index: k - 1,
            name: format!("column {}", k - 1),
        })?;
    let residuals = y - x * &coefficients;
    let rss = residuals.norm_squared();
    Ok(OlsFit {
        coefficients,
        residuals,
        rss,
    })
}

fn xtx_inverse(x: &DMatrix<f64>) -> Result<DMatrix<f64>, EconError> {
    let xtx = x.transpose() * x;
    xtx.cholesky()
        .map(|c| c.inverse())
        .ok_or(EconError::SingularCovariance)
}

/// Homoskedastic `s² (XᵀX)⁻¹`.
pub fn classical_cov(x: &DMatrix<f64>, residuals: &DVector<f64>) -> Result<DMatrix<f64>, EconError> {
    let (n, k) = x.shape();
    if n <= k {
        return Err(EconError::TooFewRows {
            rows: n,
            columns: k,
            needed: k + 1,
        });
    }
    let s2 = residuals.norm_squared() / (n - k) as f64;
    Ok(xtx_inverse(x)? * s2)
}

/// CR1 sandwich: `(XᵀX)⁻¹ (Σ_g X_gᵀ e_g e_gᵀ X_g) (XᵀX)⁻¹` times
/// `G/(G−1) · (n−1)/(n−k)`.
pub fn cluster_robust_cov(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    clusters: &[usize],
) -> Result<DMatrix<f64>, EconError> {
    let (n, k) = x.shape();
    if residuals.len() != n || clusters.len() != n {
        return Err(EconError::Dimension(format!(
            "X has {n} rows, residuals {}, cluster ids {}",
            residuals.len(),
            clusters.len()
        )));
    }
    if n <= k {
        return Err(EconError::TooFewRows {
            rows: n,
            columns: k,
            needed: k + 1,
        });
    }
    let mut scores: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
    for i in 0..n {
        let s = scores.entry(clusters[i]).or_insert_with(|| DVector::zeros(k));
        *s += x.row(i).transpose() * residuals[i];
    }
    let g = scores.len();
    if g < 2 {
        return Err(EconError::TooFewClusters(g));
    }
    let mut meat = DMatrix::zeros(k, k);
    for s in scores.values() {
        meat += s * s.transpose();
    }
    let bread = xtx_inverse(x)?;
    let scale = g as f64 / (g - 1) as f64 * (n - 1) as f64 / (n - k) as f64;
    let v = &bread * meat * &bread * scale;
    Ok((&v + v.transpose()) * 0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegressionResult {
    pub treatment: TreatmentId,
    pub outcome: Outcome,
    /// `"Intercept"` followed by regressor labels.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub n: usize,
    pub clusters: usize,
    pub rss: f64,
}

impl RegressionResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.std_errors[i])
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let k = self.coefficients.len();
        DMatrix::from_fn(k, k, |i, j| self.covariance[i][j])
    }

    pub fn coef_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }
}

pub fn fit_reaction(
    panel: &PanelDataset,
    outcome: Outcome,
    regressors: &[Regressor],
) -> Result<RegressionResult, EconError> {
    let names: Vec<String> = std::iter::once("Intercept".to_string())
        .chain(regressors.iter().map(|r| r.label().to_string()))
        .collect();
    let x = panel.design(regressors);
    let y = panel.outcome(outcome);
    let fit = ols(&x, &y).map_err(|e| match e {
        EconError::RankDeficient { index, .. } => EconError::RankDeficient {
            index,
            name: names[index].clone(),
        },
        other => other,
    })?;
    let cov = cluster_robust_cov(&x, &fit.residuals, &panel.clusters())?;
    let k = names.len();
    let std_errors: Vec<f64> = (0..k).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let coefficients: Vec<f64> = fit.coefficients.iter().copied().collect();
    Ok(RegressionResult {
        treatment: panel.treatment,
        outcome,
        t_stats: coefficients.iter().zip(&std_errors).map(|(b, s)| b / s).collect(),
        names,
        coefficients,
        std_errors,
        covariance: (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect(),
        n: panel.len(),
        clusters: panel.n_clusters,
        rss: fit.rss,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WaldTarget {
    Coefficient(usize),
    /// Every coefficient, intercept included.
    All,
    /// Every coefficient except the first (intercept).
    Slopes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Equality of coefficients across two independent regressions.
pub fn wald_equality(
    b1: &DVector<f64>,
    v1: &DMatrix<f64>,
    b2: &DVector<f64>,
    v2: &DMatrix<f64>,
    target: WaldTarget,
) -> Result<WaldTest, EconError> {
    let k = b1.len();
    if b2.len() != k || v1.shape() != (k, k) || v2.shape() != (k, k) {
        return Err(EconError::Dimension(format!(
            "coefficient vectors of length {k} and {} with covariances {:?} and {:?}",
            b2.len(),
            v1.shape(),
            v2.shape()
        )));
    }
    let idx: Vec<usize> = match target {
        WaldTarget::Coefficient(i) if i < k => vec![i],
        WaldTarget::Coefficient(i) => {
            return Err(EconError::Dimension(format!("coefficient {i} out of {k}")))
        }
        WaldTarget::All => (0..k).collect(),
        WaldTarget::Slopes => (1..k).collect(),
    };
    let m = idx.len();
    let d = DVector::from_iterator(m, idx.iter().map(|&i| b1[i] - b2[i]));
    let v = DMatrix::from_fn(m, m, |a, b| v1[(idx[a], idx[b])] + v2[(idx[a], idx[b])]);
    let statistic = if d.iter().all(|x| *x == 0.0) {
        0.0
    } else {
        let chol = v.cholesky().ok_or(EconError::SingularCovariance)?;
        d.dot(&chol.solve(&d))
    };
    let chi = ChiSquared::new(m as f64).map_err(|_| EconError::Dimension("zero degrees of freedom".into()))?;
    Ok(WaldTest {
        statistic,
        df: m,
        p_value: (1.0 - chi.cdf(statistic)).clamp(0.0, 1.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreatmentSummary {
    pub treatment: TreatmentId,
    pub records: usize,
    pub pair_rounds: usize,
    pub mean_shared: f64,
    pub falsification_rate: f64,
    pub accuracy_rate: f64,
    pub distrust_rate: f64,
    /// Share of pair-rounds in which neither player shared anything.
    pub both_zero_rate: f64,
}

#[derive(Default)]
struct Acc {
    records: usize,
    shared: u64,
    falsified: u64,
    accurate: u64,
    distrust: u64,
    pair_rounds: BTreeMap<(u64, String, u32, u32), bool>,
}

impl Acc {
    fn add(&mut self, key: (u64, String, u32, u32), shared: u64, f: bool, a: bool, d: bool) {
        self.records += 1;
        self.shared += shared;
        self.falsified += u64::from(f);
        self.accurate += u64::from(a);
        self.distrust += u64::from(d);
        let zero = self.pair_rounds.entry(key).or_insert(true);
        *zero &= shared == 0;
    }

    fn finish(self, treatment: TreatmentId) -> TreatmentSummary {
        let n = self.records.max(1) as f64;
        let pr = self.pair_rounds.len();
        TreatmentSummary {
            treatment,
            records: self.records,
            pair_rounds: pr,
            mean_shared: self.shared as f64 / n,
            falsification_rate: self.falsified as f64 / n,
            accuracy_rate: self.accurate as f64 / n,
            distrust_rate: self.distrust as f64 / n,
            both_zero_rate: self.pair_rounds.values().filter(|&&z| z).count() as f64 / pr.max(1) as f64,
        }
    }
}

/// Per-treatment means, for treatments present in the log.
pub fn summarize_treatments(records: &[RoundRecord]) -> Vec<TreatmentSummary> {
    let mut acc: BTreeMap<TreatmentId, Acc> = BTreeMap::new();
    for r in records {
        acc.entry(r.treatment).or_default().add(
            (r.session_id, r.sequence.to_string(), r.pair_id, r.round),
            r.shared_count as u64,
            r.falsified,
            r.accuracy,
            r.distrust_observed,
        );
    }
    acc.into_iter().map(|(t, a)| a.finish(t)).collect()
}

/// Same table computed directly from CSV text, one row at a time, without
/// building records.
pub fn summarize_csv<R: Read>(input: R) -> Result<Vec<TreatmentSummary>, EconError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(|e| EconError::Csv(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EconError::Csv(format!("missing column {name}")))
    };
    let [session, sequence, treatment, pair, round, shared, falsified, distrust, accuracy] = [
        "session_id",
        "sequence",
        "treatment",
        "pair_id",
        "round",
        "shared_count",
        "falsified",
        "distrust_observed",
        "accuracy",
    ]
    .map(col);
    let (session, sequence, treatment, pair, round) = (session?, sequence?, treatment?, pair?, round?);
    let (shared, falsified, distrust, accuracy) = (shared?, falsified?, distrust?, accuracy?);
    let mut acc: BTreeMap<TreatmentId, Acc> = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| EconError::Csv(e.to_string()))?;
        let int = |i: usize| -> Result<u64, EconError> {
            row[i]
                .parse()
                .map_err(|_| EconError::Csv(format!("bad integer {:?}", &row[i])))
        };
        let t: TreatmentId = row[treatment]
            .parse()
            .map_err(|_| EconError::Csv(format!("bad treatment {:?}", &row[treatment])))?;
        let key = (int(session)?, row[sequence].to_string(), int(pair)? as u32, int(round)? as u32);
        acc.entry(t).or_default().add(
            key,
            int(shared)?,
            int(falsified)? == 1,
            int(accuracy)? == 1,
            int(distrust)? == 1,
        );
    }
    Ok(acc.into_iter().map(|(t, a)| a.finish(t)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderEffectRow {
    pub treatment: TreatmentId,
    pub mean_abcd: f64,
    pub mean_badc: f64,
    /// BADC minus ABCD.
    pub difference: f64,
    pub std_error: f64,
    pub test: WaldTest,
    pub n_abcd: usize,
    pub n_badc: usize,
}

/// Mean #Shared by sequence per treatment, with a pair-clustered test that
/// the BADC shift is zero.
pub fn order_effect_summary(records: &[RoundRecord]) -> Result<Vec<OrderEffectRow>, EconError> {
    for s in [Sequence::Abcd, Sequence::Badc] {
        if !records.iter().any(|r| r.sequence == s) {
            return Err(EconError::MissingSequence(s));
        }
    }
    let mut out = Vec::new();
    for t in TreatmentId::ALL {
        let rows: Vec<&RoundRecord> = records.iter().filter(|r| r.treatment == t).collect();
        if rows.is_empty() {
            continue;
        }
        let dummy = |r: &RoundRecord| if r.sequence == Sequence::Badc { 1.0 } else { 0.0 };
        let n = rows.len();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { dummy(rows[i]) });
        let y = DVector::from_iterator(n, rows.iter().map(|r| r.shared_count as f64));
        let mut keys: BTreeMap<(u64, Sequence, u32), usize> = BTreeMap::new();
        let clusters: Vec<usize> = rows
            .iter()
            .map(|r| {
                let next = keys.len();
                *keys.entry((r.session_id, r.sequence, r.pair_id)).or_insert(next)
            })
            .collect();
        let fit = ols(&x, &y)?;
        let cov = cluster_robust_cov(&x, &fit.residuals, &clusters)?;
        let n_badc = rows.iter().filter(|r| r.sequence == Sequence::Badc).count();
        let diff = fit.coefficients[1];
        let zero = DVector::zeros(2);
        let test = wald_equality(&fit.coefficients, &cov, &zero, &DMatrix::zeros(2, 2), WaldTarget::Coefficient(1))?;
        out.push(OrderEffectRow {
            treatment: t,
            mean_abcd: fit.coefficients[0],
            mean_badc: fit.coefficients[0] + diff,
            difference: diff,
            std_error: cov[(1, 1)].max(0.0).sqrt(),
            test,
            n_abcd: n - n_badc,
            n_badc,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegressionEntry {
    pub treatment: TreatmentId,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<RegressionResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossTreatmentTest {
    pub outcome: Outcome,
    pub first: TreatmentId,
    pub second: TreatmentId,
    /// Regressor label, or `"all slopes"`.
    pub coefficient: String,
    pub test: WaldTest,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub summaries: Vec<TreatmentSummary>,
    pub regressions: Vec<RegressionEntry>,
    /// `None` when neither A and B nor C and D are both estimable.
    pub cross_treatment_tests: Option<Vec<CrossTreatmentTest>>,
    /// `None` unless both sequences are present.
    pub order_effects: Option<Vec<OrderEffectRow>>,
}

/// Per-treatment reaction functions for every outcome, Wald comparisons
/// across the two incentive schemes at each information level, and order
/// effects when both sequences are present.
pub fn analyze(records: &[RoundRecord]) -> AnalysisReport {
    let summaries = summarize_treatments(records);
    let mut regressions = Vec::new();
    for s in &summaries {
        let panel = build_panel(records, s.treatment);
        for o in Outcome::ALL {
            let fit = panel
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|p| fit_reaction(p, o, &default_regressors(s.treatment)));
            regressions.push(match fit {
                Ok(r) => RegressionEntry {
                    treatment: s.treatment,
                    outcome: o,
                    result: Some(r),
                    error: None,
                },
                Err(e) => RegressionEntry {
                    treatment: s.treatment,
                    outcome: o,
                    result: None,
                    error: Some(e.to_string()),
                },
            });
        }
    }
    let find = |t: TreatmentId, o: Outcome| {
        regressions
            .iter()
            .find(|e| e.treatment == t && e.outcome == o)
            .and_then(|e| e.result.as_ref())
    };
    let mut cross_treatment_tests = Vec::new();
    for (a, b) in [(TreatmentId::A, TreatmentId::B), (TreatmentId::C, TreatmentId::D)] {
        for o in Outcome::ALL {
            let (Some(ra), Some(rb)) = (find(a, o), find(b, o)) else {
                continue;
            };
            let (ba, va, bb, vb) = (ra.coef_vector(), ra.cov_matrix(), rb.coef_vector(), rb.cov_matrix());
            let mut push = |coefficient: String, target| {
                if let Ok(test) = wald_equality(&ba, &va, &bb, &vb, target) {
                    cross_treatment_tests.push(CrossTreatmentTest {
                        outcome: o,
                        first: a,
                        second: b,
                        coefficient,
                        test,
                    });
                }
            };
            for i in 1..ra.names.len() {
                push(ra.names[i].clone(), WaldTarget::Coefficient(i));
            }
            push("all slopes".to_string(), WaldTarget::Slopes);
        }
    }
    AnalysisReport {
        summaries,
        regressions,
        cross_treatment_tests: (!cross_treatment_tests.is_empty()).then_some(cross_treatment_tests),
        order_effects: order_effect_summary(records).ok(),
    }
}

/// Plain-text rendering of a report.
pub fn render_text(report: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Treatment summaries");
    let _ = writeln!(
        s,
        "{:<10}{:>9}{:>10}{:>12}{:>11}{:>11}{:>11}",
        "treatment", "records", "#Shared", "falsified", "accuracy", "distrust", "both-zero"
    );
    for t in &report.summaries {
        let _ = writeln!(
            s,
            "{:<10}{:>9}{:>10.3}{:>12.3}{:>11.3}{:>11.3}{:>11.3}",
            t.treatment.to_string(),
            t.records,
            t.mean_shared,
            t.falsification_rate,
            t.accuracy_rate,
            t.distrust_rate,
            t.both_zero_rate
        );
    }
    for e in &report.regressions {
        let _ = writeln!(s, "\nTreatment {} : {}", e.treatment, e.outcome.label());
        match (&e.result, &e.error) {
            (Some(r), _) => {
                let _ = writeln!(s, "  n = {}, clusters = {}", r.n, r.clusters);
                for i in 0..r.names.len() {
                    let _ = writeln!(
                        s,
                        "  {:<24}{:>10.4}{:>10.4}{:>9.2}",
                        r.names[i], r.coefficients[i], r.std_errors[i], r.t_stats[i]
                    );
                }
            }
            (None, Some(err)) => {
                let _ = writeln!(s, "  not estimable: {err}");
            }
            _ => {}
        }
    }
    match &report.cross_treatment_tests {
        None => {
            let _ = writeln!(s, "\nCross-treatment equality tests: absent");
        }
        Some(tests) => {
        let _ = writeln!(s, "\nCross-treatment equality tests");
        for c in tests {
            let _ = writeln!(
                s,
                "  {} vs {} {:<10} {:<24} chi2({}) = {:>8.3}  p = {:.4}",
                c.first,
                c.second,
                c.outcome.label(),
                c.coefficient,
                c.test.df,
                c.test.statistic,
                c.test.p_value
            );
        }
        }
    }
    if let Some(rows) = &report.order_effects {
        let _ = writeln!(s, "\nMean #Shared by order of treatments");
        for r in rows {
            let _ = writeln!(
                s,
                "  {}  ABCD {:.3}  BADC {:.3}  diff {:+.3} (se {:.3})  p = {:.4}",
                r.treatment, r.mean_abcd, r.mean_badc, r.difference, r.std_error, r.test.p_value
            );
        }
    }
    s
}
