//! Exact expected-payoff bimatrix of the low-information stage game and its
//! pure-strategy analysis.
//!
//! Each player picks one of five share actions (`S0`, `S1`, `S2` truthful;
//! `F1`, `F2` falsified) and whether to trust or distrust whatever the
//! partner sends, giving ten strategies. Cell values are exact rational
//! expectations in cents, obtained by enumerating every database, every
//! endowment split, every randomisation of the sharer and every coin the
//! receiver flips.
//!
//! Semantics pinned here:
//! * `S1` shares one of the sharer's two entries, uniformly.
//! * Deceptive `F1` shares one of the two entries with its target flipped;
//!   deceptive `F2` shares both, both flipped.
//! * Fabricated `F1`/`F2` share one/two distinct triples drawn uniformly
//!   from the six triples not in the sharer's endowment.
//! * A distrusting receiver discards everything received.
//! * Tournament ties split the bonus evenly in expectation.

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::game_core::{
    CompleteDatabase, CueProfile, DatabaseEntry, FalsificationConvention, Incentive, TreatmentId,
    TreatmentSpec, EndowmentMode, PARTITION_SPLITS,
};

pub type Exact = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EquilibriumError {
    #[error("treatment {0} uses with-replacement endowments; exact solving covers only low-information treatments A and B")]
    UnsupportedTreatment(TreatmentId),
    #[error("bimatrix is empty or ragged")]
    MalformedBimatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ShareAction {
    S0,
    S1,
    S2,
    F1,
    F2,
}

impl ShareAction {
    pub const ALL: [ShareAction; 5] = [
        ShareAction::S0,
        ShareAction::S1,
        ShareAction::S2,
        ShareAction::F1,
        ShareAction::F2,
    ];

    pub fn count(self) -> usize {
        match self {
            ShareAction::S0 => 0,
            ShareAction::S1 | ShareAction::F1 => 1,
            ShareAction::S2 | ShareAction::F2 => 2,
        }
    }

    pub fn is_falsified(self) -> bool {
        matches!(self, ShareAction::F1 | ShareAction::F2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Trust,
    Distrust,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StageStrategy {
    pub share: ShareAction,
    pub response: Response,
}

impl fmt::Display for StageStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = match self.response {
            Response::Trust => "trust",
            Response::Distrust => "distrust",
        };
        write!(f, "({:?},{r})", self.share)
    }
}

/// The ten strategies, share action major: `(S0,trust), (S0,distrust),
/// (S1,trust), ... (F2,distrust)`.
pub fn enumerate_strategies() -> Vec<StageStrategy> {
    ShareAction::ALL
        .iter()
        .flat_map(|&share| {
            [Response::Trust, Response::Distrust]
                .map(|response| StageStrategy { share, response })
        })
        .collect()
}

/// Every equally-likely realisation of what a sharer holding `own` sends.
fn realizations(
    action: ShareAction,
    own: [DatabaseEntry; 2],
    convention: FalsificationConvention,
) -> Vec<Vec<DatabaseEntry>> {
    use FalsificationConvention::*;
    let outside = || -> Vec<DatabaseEntry> {
        DatabaseEntry::all()
            .into_iter()
            .filter(|t| !own.contains(t))
            .collect()
    };
    match (action, convention) {
        (ShareAction::S0, _) => vec![vec![]],
        (ShareAction::S1, _) => vec![vec![own[0]], vec![own[1]]],
        (ShareAction::S2, _) => vec![own.to_vec()],
        (ShareAction::F1, Deceptive) => vec![vec![own[0].flipped()], vec![own[1].flipped()]],
        (ShareAction::F2, Deceptive) => vec![vec![own[0].flipped(), own[1].flipped()]],
        (ShareAction::F1, Fabricate) => outside().into_iter().map(|t| vec![t]).collect(),
        (ShareAction::F2, Fabricate) => {
            let out = outside();
            let mut v = Vec::new();
            for i in 0..out.len() {
                for j in i + 1..out.len() {
                    v.push(vec![out[i], out[j]]);
                }
            }
            v
        }
    }
}

/// Probability that a receiver holding `own` submits the exact database
/// after using `trusted` receipts and guessing the rest.
fn receiver_accuracy(own: [DatabaseEntry; 2], trusted: &[DatabaseEntry], db: &CompleteDatabase) -> Exact {
    let half = Exact::new(1, 2);
    let mut p = Exact::one();
    for cue in CueProfile::ALL {
        if own.iter().any(|e| e.cue == cue) {
            continue;
        }
        let mut covering = trusted.iter().filter(|e| e.cue == cue).map(|e| e.target);
        match covering.next() {
            Some(first) if covering.all(|t| t == first) => {
                if first != db.target(cue) {
                    return Exact::zero();
                }
            }
            _ => p *= half,
        }
    }
    p
}

fn accuracy_given(
    sharer_action: ShareAction,
    sharer_own: [DatabaseEntry; 2],
    receiver_own: [DatabaseEntry; 2],
    response: Response,
    db: &CompleteDatabase,
    convention: FalsificationConvention,
) -> Exact {
    let reals = realizations(sharer_action, sharer_own, convention);
    let n = reals.len() as i64;
    reals
        .iter()
        .map(|sent| match response {
            Response::Trust => receiver_accuracy(receiver_own, sent, db),
            Response::Distrust => receiver_accuracy(receiver_own, &[], db),
        })
        .fold(Exact::zero(), |acc, p| acc + p)
        / n
}

fn require_low_info(treatment: &TreatmentSpec) -> Result<(), EquilibriumError> {
    if treatment.endowment_mode != EndowmentMode::Partition {
        return Err(EquilibriumError::UnsupportedTreatment(treatment.id));
    }
    Ok(())
}

/// Exact expected `(row, column)` payoffs in cents.
pub fn expected_payoffs(
    row: StageStrategy,
    col: StageStrategy,
    treatment: &TreatmentSpec,
    convention: FalsificationConvention,
) -> Result<(Exact, Exact), EquilibriumError> {
    require_low_info(treatment)?;
    let one = Exact::one();
    let half = Exact::new(1, 2);
    let mut bonus = [Exact::zero(), Exact::zero()];
    let mut cases = 0i64;
    for db in CompleteDatabase::enumerate() {
        let all = db.entries();
        for split in PARTITION_SPLITS {
            let rest: Vec<usize> = (0..4).filter(|i| !split.contains(i)).collect();
            let row_own = [all[split[0]], all[split[1]]];
            let col_own = [all[rest[0]], all[rest[1]]];
            let p_row = accuracy_given(col.share, col_own, row_own, row.response, &db, convention);
            let p_col = accuracy_given(row.share, row_own, col_own, col.response, &db, convention);
            match treatment.incentive {
                Incentive::Cooperative => {
                    let either = one - (one - p_row) * (one - p_col);
                    let b = either * treatment.coop_bonus;
                    bonus[0] += b;
                    bonus[1] += b;
                }
                Incentive::Tournament => {
                    let tb = treatment.tournament_bonus;
                    bonus[0] += (p_row * (one - p_col) + p_row * p_col * half) * tb;
                    bonus[1] += (p_col * (one - p_row) + p_row * p_col * half) * tb;
                }
            }
            cases += 1;
        }
    }
    let cost = |s: StageStrategy| Exact::from_integer(treatment.share_cost * s.share.count() as i64);
    Ok((bonus[0] / cases - cost(row), bonus[1] / cases - cost(col)))
}

/// Stage-game context attached to a bimatrix built from the game rules.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageGame {
    pub treatment: TreatmentSpec,
    pub convention: FalsificationConvention,
    pub strategies: Vec<StageStrategy>,
}

/// A two-player normal-form game with exact payoffs.
#[derive(Clone, Debug, PartialEq)]
pub struct Bimatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// `payoffs[i][j] = (row payoff, column payoff)`.
    pub payoffs: Vec<Vec<(Exact, Exact)>>,
    /// Which row (and column) strategies falsify.
    pub falsifying: Vec<bool>,
    pub stage: Option<StageGame>,
}

impl Bimatrix {
    pub fn from_payoffs(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        payoffs: Vec<Vec<(Exact, Exact)>>,
    ) -> Result<Self, EquilibriumError> {
        if payoffs.is_empty()
            || payoffs.len() != row_labels.len()
            || payoffs.iter().any(|r| r.len() != col_labels.len())
        {
            return Err(EquilibriumError::MalformedBimatrix);
        }
        let falsifying = vec![false; row_labels.len()];
        Ok(Bimatrix {
            row_labels,
            col_labels,
            payoffs,
            falsifying,
            stage: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.payoffs.len()
    }

    pub fn cols(&self) -> usize {
        self.payoffs[0].len()
    }

    pub fn cell(&self, i: usize, j: usize) -> (Exact, Exact) {
        self.payoffs[i][j]
    }

    /// Row payoff at `(i, j)` equals column payoff at `(j, i)` everywhere.
    pub fn is_symmetric(&self) -> bool {
        self.rows() == self.cols()
            && (0..self.rows())
                .all(|i| (0..self.cols()).all(|j| self.payoffs[i][j].0 == self.payoffs[j][i].1))
    }
}

pub fn build_bimatrix(
    treatment: &TreatmentSpec,
    convention: FalsificationConvention,
) -> Result<Bimatrix, EquilibriumError> {
    require_low_info(treatment)?;
    let strategies = enumerate_strategies();
    let n = strategies.len();
    let flat: Vec<(Exact, Exact)> = (0..n * n)
        .into_par_iter()
        .map(|k| expected_payoffs(strategies[k / n], strategies[k % n], treatment, convention))
        .collect::<Result<_, _>>()?;
    let payoffs = flat.chunks(n).map(|c| c.to_vec()).collect();
    let labels: Vec<String> = strategies.iter().map(|s| s.to_string()).collect();
    Ok(Bimatrix {
        row_labels: labels.clone(),
        col_labels: labels,
        payoffs,
        falsifying: strategies.iter().map(|s| s.share.is_falsified()).collect(),
        stage: Some(StageGame {
            treatment: *treatment,
            convention,
            strategies,
        }),
    })
}

/// Profiles where neither player has a strictly improving unilateral
/// deviation, as `(row index, column index)`.
pub fn find_pure_nash(m: &Bimatrix) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let (r, c) = m.cell(i, j);
            let row_ok = (0..m.rows()).all(|k| m.cell(k, j).0 <= r);
            let col_ok = (0..m.cols()).all(|l| m.cell(i, l).1 <= c);
            if row_ok && col_ok {
                out.push((i, j));
            }
        }
    }
    out
}

/// Exact value serialised as a reduced fraction string plus a float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactValue(pub Exact);

impl Serialize for ExactValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("ExactValue", 2)?;
        st.serialize_field("exact", &self.0.to_string())?;
        st.serialize_field("approx", &self.0.to_f64().unwrap_or(f64::NAN))?;
        st.end()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Profile {
    pub row: String,
    pub col: String,
    pub row_index: usize,
    pub col_index: usize,
    pub row_payoff: ExactValue,
    pub col_payoff: ExactValue,
}

impl Profile {
    fn at(m: &Bimatrix, i: usize, j: usize) -> Self {
        let (r, c) = m.cell(i, j);
        Profile {
            row: m.row_labels[i].clone(),
            col: m.col_labels[j].clone(),
            row_index: i,
            col_index: j,
            row_payoff: ExactValue(r),
            col_payoff: ExactValue(c),
        }
    }

    pub fn total(&self) -> Exact {
        self.row_payoff.0 + self.col_payoff.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestResponses {
    pub opponent: String,
    pub best: Vec<String>,
    pub payoff: ExactValue,
}

/// One opponent strategy against which some falsifying strategy earns
/// strictly more than every truthful one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FalsificationWin {
    pub opponent: String,
    pub falsifying: Vec<String>,
    pub falsifying_payoff: ExactValue,
    pub best_truthful_payoff: ExactValue,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FalsificationVerdict {
    /// No opponent strategy makes falsifying strictly better than the best
    /// truthful reply.
    pub never_strict_best_response: bool,
    pub strict_wins: Vec<FalsificationWin>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub pure_nash: Vec<Profile>,
    pub pareto_optimal: Vec<Profile>,
    pub max_total_payoff: ExactValue,
    pub max_total_profiles: Vec<Profile>,
    /// Row best responses to each column strategy.
    pub row_best_responses: Vec<BestResponses>,
    /// Column best responses to each row strategy.
    pub col_best_responses: Vec<BestResponses>,
    pub falsification: FalsificationVerdict,
}

pub fn pareto_and_dominance(m: &Bimatrix) -> EquilibriumReport {
    let cells: Vec<(usize, usize)> = (0..m.rows())
        .flat_map(|i| (0..m.cols()).map(move |j| (i, j)))
        .collect();
    let dominated = |(i, j): (usize, usize)| {
        let (r, c) = m.cell(i, j);
        cells.iter().any(|&(k, l)| {
            let (r2, c2) = m.cell(k, l);
            r2 >= r && c2 >= c && (r2 > r || c2 > c)
        })
    };
    let pareto_optimal = cells
        .iter()
        .filter(|&&ij| !dominated(ij))
        .map(|&(i, j)| Profile::at(m, i, j))
        .collect();

    let total = |(i, j): (usize, usize)| m.cell(i, j).0 + m.cell(i, j).1;
    let max_total = cells.iter().map(|&ij| total(ij)).max().unwrap_or_else(Exact::zero);
    let max_total_profiles = cells
        .iter()
        .filter(|&&ij| total(ij) == max_total)
        .map(|&(i, j)| Profile::at(m, i, j))
        .collect();

    let row_best_responses = (0..m.cols())
        .map(|j| {
            let best = (0..m.rows()).map(|i| m.cell(i, j).0).max().unwrap();
            BestResponses {
                opponent: m.col_labels[j].clone(),
                best: (0..m.rows())
                    .filter(|&i| m.cell(i, j).0 == best)
                    .map(|i| m.row_labels[i].clone())
                    .collect(),
                payoff: ExactValue(best),
            }
        })
        .collect();
    let col_best_responses = (0..m.rows())
        .map(|i| {
            let best = (0..m.cols()).map(|j| m.cell(i, j).1).max().unwrap();
            BestResponses {
                opponent: m.row_labels[i].clone(),
                best: (0..m.cols())
                    .filter(|&j| m.cell(i, j).1 == best)
                    .map(|j| m.col_labels[j].clone())
                    .collect(),
                payoff: ExactValue(best),
            }
        })
        .collect();

    let mut strict_wins = Vec::new();
    if m.falsifying.iter().any(|&f| f) {
        for j in 0..m.cols() {
            let best_of = |want: bool| {
                (0..m.rows())
                    .filter(|&i| m.falsifying[i] == want)
                    .map(|i| m.cell(i, j).0)
                    .max()
            };
            if let (Some(f), Some(t)) = (best_of(true), best_of(false)) {
                if f > t {
                    strict_wins.push(FalsificationWin {
                        opponent: m.col_labels[j].clone(),
                        falsifying: (0..m.rows())
                            .filter(|&i| m.falsifying[i] && m.cell(i, j).0 == f)
                            .map(|i| m.row_labels[i].clone())
                            .collect(),
                        falsifying_payoff: ExactValue(f),
                        best_truthful_payoff: ExactValue(t),
                    });
                }
            }
        }
    }

    EquilibriumReport {
        pure_nash: find_pure_nash(m)
            .into_iter()
            .map(|(i, j)| Profile::at(m, i, j))
            .collect(),
        pareto_optimal,
        max_total_payoff: ExactValue(max_total),
        max_total_profiles,
        row_best_responses,
        col_best_responses,
        falsification: FalsificationVerdict {
            never_strict_best_response: strict_wins.is_empty(),
            strict_wins,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixCell {
    pub row: String,
    pub col: String,
    pub row_payoff: ExactValue,
    pub col_payoff: ExactValue,
}

/// JSON document emitted by the `equilibrium` command.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumDocument {
    pub treatment: TreatmentId,
    pub convention: FalsificationConvention,
    pub coop_bonus_cents: i64,
    pub tournament_bonus_cents: i64,
    pub share_cost_cents: i64,
    pub strategies: Vec<String>,
    pub matrix: Vec<Vec<MatrixCell>>,
    pub report: EquilibriumReport,
}

pub fn solve(
    treatment: &TreatmentSpec,
    convention: FalsificationConvention,
) -> Result<EquilibriumDocument, EquilibriumError> {
    let m = build_bimatrix(treatment, convention)?;
    let report = pareto_and_dominance(&m);
    let matrix = (0..m.rows())
        .map(|i| {
            (0..m.cols())
                .map(|j| MatrixCell {
                    row: m.row_labels[i].clone(),
                    col: m.col_labels[j].clone(),
                    row_payoff: ExactValue(m.cell(i, j).0),
                    col_payoff: ExactValue(m.cell(i, j).1),
                })
                .collect()
        })
        .collect();
    Ok(EquilibriumDocument {
        treatment: treatment.id,
        convention,
        coop_bonus_cents: treatment.coop_bonus,
        tournament_bonus_cents: treatment.tournament_bonus,
        share_cost_cents: treatment.share_cost,
        strategies: m.row_labels.clone(),
        matrix,
        report,
    })
}
