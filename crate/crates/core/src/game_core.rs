//! Domain types and single-round mechanics of the information-sharing game.
//!
//! A round works on a four-entry database mapping the binary cue profiles
//! `(x1, x2)` to a binary target. Each player holds a true endowment drawn
//! from that database, may share (possibly falsified) entries at a per-entry
//! cost, and then submits a complete view of the database. Bonuses are paid
//! only for perfectly accurate views.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Money is always integer cents.
pub type Cents = i64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error("cue profile {0} is missing from the database mapping")]
    MissingCue(CueProfile),
    #[error("cue profile {0} appears more than once in the database mapping")]
    DuplicateCue(CueProfile),
    #[error("share count {count} outside 0..={max}")]
    ShareCountOutOfRange { count: usize, max: usize },
    #[error("endowment of size {got} does not match mode {mode:?} (expected {expected})")]
    EndowmentSize {
        mode: EndowmentMode,
        expected: usize,
        got: usize,
    },
    #[error("invalid treatment: {0}")]
    InvalidTreatment(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CueProfile {
    pub x1: bool,
    pub x2: bool,
}

impl CueProfile {
    /// The four profiles in canonical order `(0,0), (0,1), (1,0), (1,1)`.
    pub const ALL: [CueProfile; 4] = [
        CueProfile { x1: false, x2: false },
        CueProfile { x1: false, x2: true },
        CueProfile { x1: true, x2: false },
        CueProfile { x1: true, x2: true },
    ];

    pub const fn new(x1: bool, x2: bool) -> Self {
        CueProfile { x1, x2 }
    }

    pub fn index(self) -> usize {
        (self.x1 as usize) << 1 | self.x2 as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i & 3]
    }
}

impl fmt::Display for CueProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x1 as u8, self.x2 as u8)
    }
}

/// One `(x1, x2, y)` triple. Shared entries may be false; endowment entries
/// never are.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DatabaseEntry {
    pub cue: CueProfile,
    pub target: bool,
}

impl DatabaseEntry {
    pub const fn new(cue: CueProfile, target: bool) -> Self {
        DatabaseEntry { cue, target }
    }

    /// Builds an entry from 0/1 components; any nonzero value counts as 1.
    pub const fn from_bits(x1: u8, x2: u8, y: u8) -> Self {
        DatabaseEntry {
            cue: CueProfile::new(x1 != 0, x2 != 0),
            target: y != 0,
        }
    }

    pub fn flipped(self) -> Self {
        DatabaseEntry {
            cue: self.cue,
            target: !self.target,
        }
    }

    /// Index in `0..8` over all possible triples.
    pub fn index(self) -> usize {
        self.cue.index() << 1 | self.target as usize
    }

    /// Every possible triple, in index order.
    pub fn all() -> [DatabaseEntry; 8] {
        std::array::from_fn(|i| DatabaseEntry::new(CueProfile::from_index(i >> 1), i & 1 == 1))
    }
}

impl fmt::Display for DatabaseEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})",
            self.cue.x1 as u8, self.cue.x2 as u8, self.target as u8
        )
    }
}

/// Ground-truth mapping from each cue profile to its target status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompleteDatabase {
    targets: [bool; 4],
}

impl CompleteDatabase {
    pub fn from_targets(targets: [bool; 4]) -> Self {
        CompleteDatabase { targets }
    }

    /// Builds a database from an explicit list of associations. Every cue
    /// profile must appear exactly once.
    pub fn from_entries(entries: &[DatabaseEntry]) -> Result<Self, GameError> {
        let mut seen = [None; 4];
        for e in entries {
            let slot = &mut seen[e.cue.index()];
            if slot.is_some() {
                return Err(GameError::DuplicateCue(e.cue));
            }
            *slot = Some(e.target);
        }
        let mut targets = [false; 4];
        for (i, t) in seen.iter().enumerate() {
            targets[i] = t.ok_or(GameError::MissingCue(CueProfile::from_index(i)))?;
        }
        Ok(CompleteDatabase { targets })
    }

    /// Draws each target independently and uniformly.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        CompleteDatabase {
            targets: std::array::from_fn(|_| rng.random::<bool>()),
        }
    }

    /// All 16 databases.
    pub fn enumerate() -> impl Iterator<Item = CompleteDatabase> {
        (0u8..16).map(|bits| CompleteDatabase {
            targets: std::array::from_fn(|i| bits >> i & 1 == 1),
        })
    }

    pub fn target(&self, cue: CueProfile) -> bool {
        self.targets[cue.index()]
    }

    pub fn entry(&self, cue: CueProfile) -> DatabaseEntry {
        DatabaseEntry::new(cue, self.target(cue))
    }

    pub fn entries(&self) -> [DatabaseEntry; 4] {
        CueProfile::ALL.map(|c| self.entry(c))
    }

    pub fn targets(&self) -> [bool; 4] {
        self.targets
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatabaseSource {
    Explicit(Vec<DatabaseEntry>),
    Random,
}

pub fn build_database<R: Rng + ?Sized>(
    source: &DatabaseSource,
    rng: &mut R,
) -> Result<CompleteDatabase, GameError> {
    match source {
        DatabaseSource::Explicit(entries) => CompleteDatabase::from_entries(entries),
        DatabaseSource::Random => Ok(CompleteDatabase::random(rng)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndowmentMode {
    Partition,
    WithReplacement,
}

impl EndowmentMode {
    pub fn size(self) -> usize {
        match self {
            EndowmentMode::Partition => 2,
            EndowmentMode::WithReplacement => 4,
        }
    }
}

/// A player's private, always-true slice of the database. With-replacement
/// endowments may hold repeated entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endowment {
    entries: Vec<DatabaseEntry>,
    mode: EndowmentMode,
}

impl Endowment {
    pub fn new(entries: Vec<DatabaseEntry>, mode: EndowmentMode) -> Result<Self, GameError> {
        if entries.len() != mode.size() {
            return Err(GameError::EndowmentSize {
                mode,
                expected: mode.size(),
                got: entries.len(),
            });
        }
        Ok(Endowment { entries, mode })
    }

    pub fn entries(&self) -> &[DatabaseEntry] {
        &self.entries
    }

    pub fn mode(&self) -> EndowmentMode {
        self.mode
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    /// Distinct entries, sorted.
    pub fn unique_entries(&self) -> Vec<DatabaseEntry> {
        let mut u = self.entries.clone();
        u.sort();
        u.dedup();
        u
    }

    pub fn unique_count(&self) -> usize {
        self.unique_entries().len()
    }

    pub fn contains(&self, entry: &DatabaseEntry) -> bool {
        self.entries.contains(entry)
    }

    pub fn known_target(&self, cue: CueProfile) -> Option<bool> {
        self.entries.iter().find(|e| e.cue == cue).map(|e| e.target)
    }
}

/// The six ways to give player 1 two of the four entries.
pub const PARTITION_SPLITS: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

pub fn draw_endowments<R: Rng + ?Sized>(
    db: &CompleteDatabase,
    mode: EndowmentMode,
    rng: &mut R,
) -> (Endowment, Endowment) {
    let all = db.entries();
    match mode {
        EndowmentMode::Partition => {
            let split = PARTITION_SPLITS[rng.random_range(0..PARTITION_SPLITS.len())];
            let first: Vec<_> = split.iter().map(|&i| all[i]).collect();
            let second: Vec<_> = (0..4)
                .filter(|i| !split.contains(i))
                .map(|i| all[i])
                .collect();
            (
                Endowment { entries: first, mode },
                Endowment { entries: second, mode },
            )
        }
        EndowmentMode::WithReplacement => {
            let mut draw = || Endowment {
                entries: (0..4).map(|_| all[rng.random_range(0..4)]).collect(),
                mode,
            };
            let first = draw();
            let second = draw();
            (first, second)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TreatmentId {
    A,
    B,
    C,
    D,
}

impl TreatmentId {
    pub const ALL: [TreatmentId; 4] = [TreatmentId::A, TreatmentId::B, TreatmentId::C, TreatmentId::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn incentive(self) -> Incentive {
        match self {
            TreatmentId::A | TreatmentId::C => Incentive::Cooperative,
            TreatmentId::B | TreatmentId::D => Incentive::Tournament,
        }
    }

    pub fn endowment_mode(self) -> EndowmentMode {
        match self {
            TreatmentId::A | TreatmentId::B => EndowmentMode::Partition,
            TreatmentId::C | TreatmentId::D => EndowmentMode::WithReplacement,
        }
    }
}

impl fmt::Display for TreatmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TreatmentId::A => "A",
            TreatmentId::B => "B",
            TreatmentId::C => "C",
            TreatmentId::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for TreatmentId {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(TreatmentId::A),
            "B" | "b" => Ok(TreatmentId::B),
            "C" | "c" => Ok(TreatmentId::C),
            "D" | "d" => Ok(TreatmentId::D),
            other => Err(GameError::InvalidTreatment(format!(
                "unknown treatment {other:?}"
            ))),
        }
    }
}

/// Order in which a session runs the four treatments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sequence {
    #[serde(rename = "ABCD")]
    Abcd,
    #[serde(rename = "BADC")]
    Badc,
}

impl Sequence {
    pub fn treatments(self) -> [TreatmentId; 4] {
        use TreatmentId::*;
        match self {
            Sequence::Abcd => [A, B, C, D],
            Sequence::Badc => [B, A, D, C],
        }
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sequence::Abcd => "ABCD",
            Sequence::Badc => "BADC",
        })
    }
}

impl FromStr for Sequence {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ABCD" => Ok(Sequence::Abcd),
            "BADC" => Ok(Sequence::Badc),
            other => Err(GameError::InvalidTreatment(format!(
                "unknown sequence {other:?} (expected ABCD or BADC)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Incentive {
    Cooperative,
    Tournament,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentSpec {
    pub id: TreatmentId,
    pub incentive: Incentive,
    pub endowment_mode: EndowmentMode,
    pub coop_bonus: Cents,
    pub tournament_bonus: Cents,
    pub share_cost: Cents,
    pub rounds: u32,
}

impl TreatmentSpec {
    pub const COOP_BONUS: Cents = 1200;
    pub const TOURNAMENT_BONUS: Cents = 2400;
    pub const SHARE_COST: Cents = 100;
    pub const ROUNDS: u32 = 16;

    pub fn standard(id: TreatmentId) -> Self {
        TreatmentSpec {
            id,
            incentive: id.incentive(),
            endowment_mode: id.endowment_mode(),
            coop_bonus: Self::COOP_BONUS,
            tournament_bonus: Self::TOURNAMENT_BONUS,
            share_cost: Self::SHARE_COST,
            rounds: Self::ROUNDS,
        }
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.incentive != self.id.incentive() || self.endowment_mode != self.id.endowment_mode() {
            return Err(GameError::InvalidTreatment(format!(
                "treatment {} must be {:?} with {:?} endowments",
                self.id,
                self.id.incentive(),
                self.id.endowment_mode()
            )));
        }
        if self.coop_bonus < 0 || self.tournament_bonus < 0 || self.share_cost < 0 {
            return Err(GameError::InvalidTreatment(
                "money values must be non-negative".into(),
            ));
        }
        if self.rounds == 0 {
            return Err(GameError::InvalidTreatment("rounds must be positive".into()));
        }
        Ok(())
    }

    pub fn endowment_size(&self) -> usize {
        self.endowment_mode.size()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareDecision {
    pub shared: Vec<DatabaseEntry>,
}

impl ShareDecision {
    pub fn new(shared: Vec<DatabaseEntry>) -> Self {
        ShareDecision { shared }
    }

    pub fn none() -> Self {
        ShareDecision::default()
    }

    pub fn count(&self) -> usize {
        self.shared.len()
    }
}

/// A complete answer to the four-blank accuracy test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccuracySubmission {
    guesses: [bool; 4],
}

impl AccuracySubmission {
    pub fn new(guesses: [bool; 4]) -> Self {
        AccuracySubmission { guesses }
    }

    pub fn from_database(db: &CompleteDatabase) -> Self {
        AccuracySubmission {
            guesses: db.targets(),
        }
    }

    pub fn guess(&self, cue: CueProfile) -> bool {
        self.guesses[cue.index()]
    }

    pub fn with_guess(mut self, cue: CueProfile, target: bool) -> Self {
        self.guesses[cue.index()] = target;
        self
    }

    pub fn guesses(&self) -> [bool; 4] {
        self.guesses
    }
}

/// True iff some shared triple cannot be matched, one-for-one, against the
/// sharer's own endowment (multiset inclusion).
pub fn detect_falsification(endowment: &Endowment, decision: &ShareDecision) -> bool {
    let mut available = [0u8; 8];
    for e in endowment.entries() {
        available[e.index()] += 1;
    }
    decision.shared.iter().any(|e| {
        let slot = &mut available[e.index()];
        if *slot == 0 {
            true
        } else {
            *slot -= 1;
            false
        }
    })
}

/// Only perfectly accurate views count.
pub fn evaluate_submission(submission: &AccuracySubmission, db: &CompleteDatabase) -> bool {
    submission.guesses() == db.targets()
}

/// Observable distrust: the receiver's answer contradicts a received target.
/// Nothing received means nothing to distrust.
pub fn detect_behavioral_distrust(
    received: &[DatabaseEntry],
    submission: &AccuracySubmission,
) -> bool {
    received
        .iter()
        .any(|e| submission.guess(e.cue) != e.target)
}

/// Who wins a tournament bonus when both players are accurate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    Random,
    PlayerOneWins,
}

/// How an F-action builds its false triple.
///
/// `Deceptive` flips the target of a true endowment entry, so a trusting
/// receiver is certainly wrong on that cue. `Fabricate` draws a uniform
/// triple that is not in the sharer's endowment; it may happen to be true.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FalsificationConvention {
    #[default]
    Deceptive,
    Fabricate,
}

impl fmt::Display for FalsificationConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FalsificationConvention::Deceptive => "deceptive",
            FalsificationConvention::Fabricate => "fabricate",
        })
    }
}

impl FromStr for FalsificationConvention {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "deceptive" => Ok(FalsificationConvention::Deceptive),
            "fabricate" => Ok(FalsificationConvention::Fabricate),
            other => Err(GameError::InvalidTreatment(format!(
                "unknown falsification convention {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub bonus: Cents,
    pub cost: Cents,
    pub net: Cents,
}

pub fn settle_round<R: Rng + ?Sized>(
    treatment: &TreatmentSpec,
    counts: [usize; 2],
    accuracy: [bool; 2],
    tie_break: TieBreak,
    rng: &mut R,
) -> Result<[Settlement; 2], GameError> {
    let max = treatment.endowment_size();
    if let Some(&count) = counts.iter().find(|&&c| c > max) {
        return Err(GameError::ShareCountOutOfRange { count, max });
    }
    let bonuses: [Cents; 2] = match treatment.incentive {
        Incentive::Cooperative => {
            let b = if accuracy[0] || accuracy[1] {
                treatment.coop_bonus
            } else {
                0
            };
            [b, b]
        }
        Incentive::Tournament => {
            let winner = match accuracy {
                [true, false] => Some(0),
                [false, true] => Some(1),
                [true, true] => Some(match tie_break {
                    TieBreak::Random => usize::from(rng.random::<bool>()),
                    TieBreak::PlayerOneWins => 0,
                }),
                [false, false] => None,
            };
            let mut b = [0, 0];
            if let Some(w) = winner {
                b[w] = treatment.tournament_bonus;
            }
            b
        }
    };
    Ok(std::array::from_fn(|i| {
        let cost = treatment.share_cost * counts[i] as Cents;
        Settlement {
            bonus: bonuses[i],
            cost,
            net: bonuses[i] - cost,
        }
    }))
}

/// One player's view of one round, as logged.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub session_id: u64,
    pub sequence: Sequence,
    pub treatment: TreatmentId,
    pub pair_id: u32,
    pub round: u32,
    pub player_id: u32,
    pub endowment_size: u8,
    pub unique_count: u8,
    pub shared_count: u8,
    pub falsified: bool,
    pub distrust_observed: bool,
    pub accuracy: bool,
    pub bonus_cents: Cents,
    pub cost_cents: Cents,
    pub net_cents: Cents,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive;

    fn e(x1: u8, x2: u8, y: u8) -> DatabaseEntry {
        DatabaseEntry::from_bits(x1, x2, y)
    }

    #[test]
    fn table_one_database() {
        // x1 = Pakistani, x2 = Pashto: only the non-Pakistani Pashto speaker is a target.
        let db = CompleteDatabase::from_entries(&[e(0, 1, 1), e(0, 0, 0), e(1, 0, 0), e(1, 1, 0)])
            .unwrap();
        assert_eq!(db.targets(), [false, true, false, false]);
        assert!(db.target(CueProfile::new(false, true)));
    }

    #[test]
    fn all_zero_database() {
        let db = CompleteDatabase::from_entries(&[e(0, 0, 0), e(0, 1, 0), e(1, 0, 0), e(1, 1, 0)])
            .unwrap();
        assert!(db.targets().iter().all(|t| !t));
    }

    #[test]
    fn explicit_mapping_errors() {
        let missing = CompleteDatabase::from_entries(&[e(0, 0, 0), e(0, 1, 0), e(1, 0, 0)]);
        assert_eq!(missing, Err(GameError::MissingCue(CueProfile::new(true, true))));
        let dup = CompleteDatabase::from_entries(&[
            e(0, 0, 0),
            e(0, 1, 0),
            e(1, 0, 0),
            e(1, 1, 0),
            e(1, 1, 1),
        ]);
        assert_eq!(dup, Err(GameError::DuplicateCue(CueProfile::new(true, true))));
    }

    #[test]
    fn random_database_frequencies() {
        let mut rng = derive(11, &[1]);
        let mut hits = [0u32; 4];
        let n = 10_000;
        for _ in 0..n {
            let db = build_database(&DatabaseSource::Random, &mut rng).unwrap();
            for (h, t) in hits.iter_mut().zip(db.targets()) {
                *h += t as u32;
            }
        }
        for h in hits {
            let f = h as f64 / n as f64;
            assert!((f - 0.5).abs() < 0.02, "frequency {f}");
        }
    }

    #[test]
    fn partition_is_disjoint_and_complete() {
        let mut rng = derive(3, &[]);
        for _ in 0..200 {
            let db = CompleteDatabase::random(&mut rng);
            let (a, b) = draw_endowments(&db, EndowmentMode::Partition, &mut rng);
            assert_eq!(a.size(), 2);
            assert_eq!(b.size(), 2);
            let mut all: Vec<_> = a.entries().iter().chain(b.entries()).copied().collect();
            all.sort();
            let mut expect = db.entries().to_vec();
            expect.sort();
            assert_eq!(all, expect);
        }
    }

    #[test]
    fn with_replacement_sizes() {
        let mut rng = derive(5, &[]);
        for _ in 0..200 {
            let db = CompleteDatabase::random(&mut rng);
            let (a, b) = draw_endowments(&db, EndowmentMode::WithReplacement, &mut rng);
            for en in [&a, &b] {
                assert_eq!(en.size(), 4);
                assert!((1..=4).contains(&en.unique_count()));
                assert!(en.entries().iter().all(|x| db.entry(x.cue) == *x));
            }
        }
    }

    #[test]
    fn with_replacement_overlap_probability_by_enumeration() {
        // Unique-cue sets of two independent 4-draw sequences are disjoint in
        // 1812 of 65536 cases.
        let masks: Vec<u8> = (0..256u32)
            .map(|s| (0..4).fold(0u8, |m, k| m | 1 << (s >> (2 * k) & 3)))
            .collect();
        let disjoint = masks
            .iter()
            .flat_map(|a| masks.iter().map(move |b| (a, b)))
            .filter(|(a, b)| *a & *b == 0)
            .count();
        assert_eq!(disjoint, 1812);
        let p = 1.0 - disjoint as f64 / 65536.0;
        assert!((p - 0.9723).abs() < 1e-4);
    }

    #[test]
    fn falsification_examples() {
        let en = Endowment::new(vec![e(0, 0, 0), e(0, 1, 1)], EndowmentMode::Partition).unwrap();
        assert!(!detect_falsification(&en, &ShareDecision::none()));
        assert!(detect_falsification(&en, &ShareDecision::new(vec![e(0, 0, 1)])));
        // A triple outside one's own endowment is falsified even if it happens to be true.
        assert!(detect_falsification(&en, &ShareDecision::new(vec![e(1, 0, 1)])));
        assert!(detect_falsification(&en, &ShareDecision::new(vec![e(1, 0, 0)])));
        assert!(!detect_falsification(
            &en,
            &ShareDecision::new(vec![e(0, 1, 1), e(0, 0, 0)])
        ));
    }

    #[test]
    fn falsification_is_multiset_inclusion_exhaustive() {
        let triples = DatabaseEntry::all();
        for db in CompleteDatabase::enumerate() {
            for split in PARTITION_SPLITS {
                let own: Vec<_> = split.iter().map(|&i| db.entries()[i]).collect();
                let en = Endowment::new(own.clone(), EndowmentMode::Partition).unwrap();
                for &t in &triples {
                    let single = ShareDecision::new(vec![t]);
                    assert_eq!(detect_falsification(&en, &single), !own.contains(&t));
                    for &u in &triples {
                        let pair = ShareDecision::new(vec![t, u]);
                        let included = t != u && own.contains(&t) && own.contains(&u);
                        assert_eq!(detect_falsification(&en, &pair), !included);
                    }
                }
            }
        }
    }

    #[test]
    fn repeated_entries_within_replacement_endowment() {
        let en = Endowment::new(
            vec![e(0, 0, 1), e(0, 0, 1), e(1, 1, 0), e(0, 1, 0)],
            EndowmentMode::WithReplacement,
        )
        .unwrap();
        assert_eq!(en.unique_count(), 3);
        assert!(!detect_falsification(&en, &ShareDecision::new(vec![e(0, 0, 1), e(0, 0, 1)])));
        assert!(detect_falsification(&en, &ShareDecision::new(vec![e(1, 1, 0), e(1, 1, 0)])));
    }

    #[test]
    fn submission_accuracy() {
        let db = CompleteDatabase::from_targets([false, true, false, false]);
        let exact = AccuracySubmission::from_database(&db);
        assert!(evaluate_submission(&exact, &db));
        for c in CueProfile::ALL {
            let off = exact.with_guess(c, !db.target(c));
            assert!(!evaluate_submission(&off, &db));
        }
    }

    #[test]
    fn guessing_two_cells_is_accurate_one_time_in_four() {
        let db = CompleteDatabase::from_targets([true, false, true, true]);
        let base = AccuracySubmission::from_database(&db);
        let unknown = [CueProfile::ALL[2], CueProfile::ALL[3]];
        let hits = (0..4)
            .filter(|g| {
                let s = base
                    .with_guess(unknown[0], g & 1 == 1)
                    .with_guess(unknown[1], g & 2 == 2);
                evaluate_submission(&s, &db)
            })
            .count();
        assert_eq!(hits, 1);
    }

    #[test]
    fn behavioral_distrust() {
        let db = CompleteDatabase::from_targets([false, false, false, false]);
        let sub = AccuracySubmission::from_database(&db).with_guess(CueProfile::new(true, true), true);
        assert!(detect_behavioral_distrust(&[e(1, 1, 0)], &sub));
        assert!(!detect_behavioral_distrust(&[], &sub));
        // A distrusting receiver who happens to guess the received target leaves no trace.
        assert!(!detect_behavioral_distrust(&[e(0, 1, 0)], &sub));
    }

    #[test]
    fn settlement_examples() {
        let mut rng = derive(1, &[]);
        let a = TreatmentSpec::standard(TreatmentId::A);
        let s = settle_round(&a, [2, 2], [true, true], TieBreak::Random, &mut rng).unwrap();
        assert_eq!((s[0].net, s[1].net), (1000, 1000));

        let b = TreatmentSpec::standard(TreatmentId::B);
        let s = settle_round(&b, [1, 0], [false, false], TieBreak::Random, &mut rng).unwrap();
        assert_eq!((s[0].net, s[1].net), (-100, 0));

        let s = settle_round(&b, [0, 0], [true, true], TieBreak::PlayerOneWins, &mut rng).unwrap();
        assert_eq!((s[0].net, s[1].net), (2400, 0));

        let err = settle_round(&a, [3, 0], [true, true], TieBreak::Random, &mut rng);
        assert_eq!(err, Err(GameError::ShareCountOutOfRange { count: 3, max: 2 }));
    }

    #[test]
    fn tournament_tie_is_a_fair_coin() {
        let mut rng = derive(99, &[]);
        let b = TreatmentSpec::standard(TreatmentId::B);
        let n = 100_000;
        let mut first = 0;
        for _ in 0..n {
            let s = settle_round(&b, [0, 0], [true, true], TieBreak::Random, &mut rng).unwrap();
            assert_eq!(s[0].net + s[1].net, 2400);
            first += (s[0].net == 2400) as u32;
        }
        let f = first as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.01, "{f}");
    }

    #[test]
    fn total_bonus_is_zero_or_full() {
        let mut rng = derive(8, &[]);
        for id in TreatmentId::ALL {
            let t = TreatmentSpec::standard(id);
            for acc in [[false, false], [true, false], [false, true], [true, true]] {
                for c0 in 0..=t.endowment_size() {
                    for c1 in 0..=t.endowment_size() {
                        let s = settle_round(&t, [c0, c1], acc, TieBreak::Random, &mut rng).unwrap();
                        let total = s[0].bonus + s[1].bonus;
                        assert!(total == 0 || total == 2400);
                        assert_eq!(s[0].net, s[0].bonus - 100 * c0 as i64);
                        assert_eq!(s[1].net, s[1].bonus - 100 * c1 as i64);
                    }
                }
            }
        }
    }

    #[test]
    fn treatment_validation() {
        for id in TreatmentId::ALL {
            TreatmentSpec::standard(id).validate().unwrap();
        }
        let mut bad = TreatmentSpec::standard(TreatmentId::A);
        bad.incentive = Incentive::Tournament;
        assert!(bad.validate().is_err());
        let mut neg = TreatmentSpec::standard(TreatmentId::D);
        neg.share_cost = -1;
        assert!(neg.validate().is_err());
    }
}
