//! Full experimental sessions: pairing, sixteen-round treatments, lag
//! feedback, random-round payment and the CSV event log.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    complete_submission, decide_share, decide_trust, AgentError, AgentPolicy, DecisionRules,
    LaggedState, ReactionCoefficients, Rounding,
};
use crate::game_core::{
    detect_behavioral_distrust, detect_falsification, draw_endowments, evaluate_submission,
    settle_round, Cents, CompleteDatabase, FalsificationConvention, GameError, RoundRecord,
    Sequence, Settlement, TieBreak, TreatmentId, TreatmentSpec,
};
use crate::rng::{derive, label, SimRng};

pub const ROUNDS_PER_SESSION: u32 = 64;

pub const CSV_HEADER: [&str; 15] = [
    "session_id",
    "sequence",
    "treatment",
    "pair_id",
    "round",
    "player_id",
    "endowment_size",
    "unique_count",
    "shared_count",
    "falsified",
    "distrust_observed",
    "accuracy",
    "bonus_cents",
    "cost_cents",
    "net_cents",
];

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("participant count must be even and at least 2, got {0}")]
    ParticipantCount(u32),
    #[error("agent roster covers {got} participants but the session has {expected}")]
    RosterSize { expected: u32, got: u32 },
    #[error("participant {participant}, treatment {treatment}: {source}")]
    Policy {
        participant: u32,
        treatment: TreatmentId,
        source: AgentError,
    },
    #[error("per-treatment policy list is missing treatment {0}")]
    MissingTreatmentPolicy(TreatmentId),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed log at data row {row}: {reason}")]
    Malformed { row: usize, reason: String },
}

/// Game-rule switches shared by every round of a session.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conventions {
    #[serde(default)]
    pub falsification: FalsificationConvention,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default)]
    pub rounding: Rounding,
}

impl Conventions {
    pub fn rules(&self) -> DecisionRules {
        DecisionRules {
            falsification: self.falsification,
            rounding: self.rounding,
        }
    }
}

/// Policy assigned to a roster group, resolved per treatment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RosterPolicy {
    /// Conditional agents with the frozen calibrated coefficients.
    Calibrated,
    StaticNash { share: u8, trust: bool },
    UniformRandom,
    /// Conditional agents; treatments not listed use calibrated values.
    Conditional {
        #[serde(default)]
        coefficients: BTreeMap<TreatmentId, ReactionCoefficients>,
    },
    /// Explicit policy for each of the four treatments.
    PerTreatment {
        policies: BTreeMap<TreatmentId, AgentPolicy>,
    },
}

impl RosterPolicy {
    pub fn resolve(&self, treatment: TreatmentId) -> Result<AgentPolicy, SessionError> {
        Ok(match self {
            RosterPolicy::Calibrated => {
                AgentPolicy::Conditional(ReactionCoefficients::calibrated(treatment))
            }
            RosterPolicy::StaticNash { share, trust } => AgentPolicy::StaticNash {
                share: *share,
                trust: *trust,
            },
            RosterPolicy::UniformRandom => AgentPolicy::UniformRandom,
            RosterPolicy::Conditional { coefficients } => AgentPolicy::Conditional(
                coefficients
                    .get(&treatment)
                    .copied()
                    .unwrap_or_else(|| ReactionCoefficients::calibrated(treatment)),
            ),
            RosterPolicy::PerTreatment { policies } => policies
                .get(&treatment)
                .cloned()
                .ok_or(SessionError::MissingTreatmentPolicy(treatment))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterGroup {
    pub count: u32,
    pub policy: RosterPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub seed: u64,
    pub participants: u32,
    pub sequence: Sequence,
    /// Roster groups, assigned to participant ids in order.
    pub agents: Vec<RosterGroup>,
    #[serde(default)]
    pub conventions: Conventions,
    #[serde(default)]
    pub carryover_lags: bool,
    /// Defaults to the seed.
    #[serde(default)]
    pub session_id: Option<u64>,
    /// Overrides of the first-round lag seed per treatment.
    #[serde(default)]
    pub initial_lags: BTreeMap<TreatmentId, LaggedState>,
}

impl SessionConfig {
    pub fn uniform(seed: u64, participants: u32, sequence: Sequence, policy: RosterPolicy) -> Self {
        SessionConfig {
            seed,
            participants,
            sequence,
            agents: vec![RosterGroup {
                count: participants,
                policy,
            }],
            conventions: Conventions::default(),
            carryover_lags: false,
            session_id: None,
            initial_lags: BTreeMap::new(),
        }
    }

    pub fn session_id(&self) -> u64 {
        self.session_id.unwrap_or(self.seed)
    }

    /// Policy of every participant (index = id − 1) in every treatment.
    pub fn resolve_roster(&self) -> Result<Vec<[AgentPolicy; 4]>, SessionError> {
        if self.participants < 2 || !self.participants.is_multiple_of(2) {
            return Err(SessionError::ParticipantCount(self.participants));
        }
        let got: u32 = self.agents.iter().map(|g| g.count).sum();
        if got != self.participants {
            return Err(SessionError::RosterSize {
                expected: self.participants,
                got,
            });
        }
        let mut roster = Vec::with_capacity(self.participants as usize);
        for group in &self.agents {
            let mut resolved = Vec::with_capacity(4);
            for t in TreatmentId::ALL {
                let spec = TreatmentSpec::standard(t);
                let policy = group.policy.resolve(t)?;
                policy.validate(&spec).map_err(|source| SessionError::Policy {
                    participant: roster.len() as u32 + 1,
                    treatment: t,
                    source,
                })?;
                resolved.push(policy);
            }
            let resolved: [AgentPolicy; 4] = resolved.try_into().expect("four treatments");
            for _ in 0..group.count {
                roster.push(resolved.clone());
            }
        }
        Ok(roster)
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        self.resolve_roster().map(|_| ())
    }
}

/// Pairs of participant ids; position `k` is pair id `k + 1`, and the
/// first member plays as player 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub pairs: Vec<(u32, u32)>,
}

impl Pairing {
    pub fn unordered(&self) -> HashSet<(u32, u32)> {
        self.pairs.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
    }
}

/// Uniform random perfect matching. With a previous pairing and at least
/// four participants no pair repeats; with two a repeat is forced.
pub fn make_pairs<R: Rng + ?Sized>(
    participants: &[u32],
    rng: &mut R,
    previous: Option<&Pairing>,
) -> Result<Pairing, SessionError> {
    let n = participants.len();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(SessionError::ParticipantCount(n as u32));
    }
    let forbidden = previous.map(Pairing::unordered).unwrap_or_default();
    if n == 2 && !forbidden.is_empty() {
        log::warn!("only two participants; re-pairing repeats the previous partner");
    }
    let mut ids = participants.to_vec();
    loop {
        ids.shuffle(rng);
        let pairing = Pairing {
            pairs: ids.chunks(2).map(|c| (c[0], c[1])).collect(),
        };
        if n == 2 || pairing.unordered().is_disjoint(&forbidden) {
            return Ok(pairing);
        }
    }
}

/// Independent streams for one pair in one treatment.
pub struct PairStreams {
    pub env: SimRng,
    pub players: [SimRng; 2],
}

impl PairStreams {
    pub fn new(seed: u64, treatment: TreatmentId, pair_id: u32) -> Self {
        let base = [label("pair"), treatment.index() as u64, pair_id as u64];
        let with = |role: &str| {
            let mut path = base.to_vec();
            path.push(label(role));
            derive(seed, &path)
        };
        PairStreams {
            env: with("env"),
            players: [with("p1"), with("p2")],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlayerOutcome {
    pub endowment_size: u8,
    pub unique_count: u8,
    pub shared_count: u8,
    pub falsified: bool,
    pub distrust_observed: bool,
    pub accuracy: bool,
    pub conflict_detected: bool,
    pub settlement: Settlement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundOutcome {
    pub players: [PlayerOutcome; 2],
}

impl RoundOutcome {
    /// Lag states both players carry into the next round.
    pub fn next_states(&self) -> [LaggedState; 2] {
        let [a, b] = self.players;
        let state = |own: PlayerOutcome, other: PlayerOutcome| LaggedState {
            own_shared_lag: own.shared_count as f64,
            own_falsified_lag: own.falsified,
            other_shared_lag: other.shared_count as f64,
            other_falsified_lag: other.falsified,
            own_accuracy_lag: own.accuracy,
            other_accuracy_lag: other.accuracy,
            own_unique_lag: own.unique_count as f64,
            other_unique_lag: other.unique_count as f64,
            first_round: false,
        };
        [state(a, b), state(b, a)]
    }
}

/// One round for a pair. Every decision uses only pre-round state, and each
/// player draws from a private stream, so the two players' evaluations are
/// independent of the order in which they run.
pub fn run_round(
    policies: [&AgentPolicy; 2],
    states: [LaggedState; 2],
    treatment: &TreatmentSpec,
    conventions: &Conventions,
    streams: &mut PairStreams,
) -> Result<RoundOutcome, SessionError> {
    run_round_ordered(policies, states, treatment, conventions, streams, [0, 1])
}

fn run_round_ordered(
    policies: [&AgentPolicy; 2],
    states: [LaggedState; 2],
    treatment: &TreatmentSpec,
    conventions: &Conventions,
    streams: &mut PairStreams,
    order: [usize; 2],
) -> Result<RoundOutcome, SessionError> {
    let rules = conventions.rules();
    let db = CompleteDatabase::random(&mut streams.env);
    let (e1, e2) = draw_endowments(&db, treatment.endowment_mode, &mut streams.env);
    let endowments = [e1, e2];

    let mut shares = [None, None];
    for &i in &order {
        shares[i] = Some(decide_share(
            policies[i],
            &states[i],
            &endowments[i],
            &rules,
            &mut streams.players[i],
        ));
    }
    let shares = shares.map(|s| s.expect("both players decide"));

    let mut views = [None, None];
    for &i in &order {
        let received = &shares[1 - i].shared;
        let rng = &mut streams.players[i];
        let trust = decide_trust(policies[i], received, rng);
        let trusted: Vec<_> = received
            .iter()
            .zip(&trust)
            .filter(|(_, &t)| t)
            .map(|(e, _)| *e)
            .collect();
        let outcome = complete_submission(&endowments[i], &trusted, rng);
        views[i] = Some((
            evaluate_submission(&outcome.submission, &db),
            detect_behavioral_distrust(received, &outcome.submission),
            outcome.conflict_detected,
        ));
    }
    let views = views.map(|v| v.expect("both players submit"));

    let counts = [shares[0].count(), shares[1].count()];
    let accuracy = [views[0].0, views[1].0];
    let settlements = settle_round(treatment, counts, accuracy, conventions.tie_break, &mut streams.env)?;

    Ok(RoundOutcome {
        players: std::array::from_fn(|i| PlayerOutcome {
            endowment_size: endowments[i].size() as u8,
            unique_count: endowments[i].unique_count() as u8,
            shared_count: counts[i] as u8,
            falsified: detect_falsification(&endowments[i], &shares[i]),
            distrust_observed: views[i].1,
            accuracy: views[i].0,
            conflict_detected: views[i].2,
            settlement: settlements[i],
        }),
    })
}

/// Identifies where a treatment sits inside a session.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreatmentContext {
    pub seed: u64,
    pub session_id: u64,
    pub sequence: Sequence,
    pub conventions: Conventions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreatmentRun {
    /// Ordered by pair, round, player.
    pub records: Vec<RoundRecord>,
    /// Lag state each record's decision was made from, parallel to `records`.
    pub states: Vec<LaggedState>,
    /// Lag state after the final round, keyed by participant id.
    pub final_states: BTreeMap<u32, LaggedState>,
}

/// Sixteen rounds for every pair. `start` gives each participant's
/// first-round lag state (missing ids use `LaggedState::initial`).
pub fn run_treatment(
    pairing: &Pairing,
    policies: &BTreeMap<u32, AgentPolicy>,
    treatment: &TreatmentSpec,
    ctx: &TreatmentContext,
    start: &BTreeMap<u32, LaggedState>,
) -> Result<TreatmentRun, SessionError> {
    treatment.validate()?;
    let default_state = LaggedState::initial(treatment);
    let per_pair: Vec<Result<_, SessionError>> = pairing
        .pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(p1, p2))| {
            let pair_id = k as u32 + 1;
            let ids = [p1, p2];
            let policy = |id: u32| {
                policies.get(&id).ok_or(SessionError::RosterSize {
                    expected: id,
                    got: policies.len() as u32,
                })
            };
            let pol = [policy(p1)?, policy(p2)?];
            let mut states = ids.map(|id| start.get(&id).copied().unwrap_or(default_state));
            let mut streams = PairStreams::new(ctx.seed, treatment.id, pair_id);
            let mut records = Vec::with_capacity(2 * treatment.rounds as usize);
            let mut used = Vec::with_capacity(2 * treatment.rounds as usize);
            for round in 1..=treatment.rounds {
                let outcome = run_round(pol, states, treatment, &ctx.conventions, &mut streams)?;
                for i in 0..2 {
                    let o = outcome.players[i];
                    records.push(RoundRecord {
                        session_id: ctx.session_id,
                        sequence: ctx.sequence,
                        treatment: treatment.id,
                        pair_id,
                        round,
                        player_id: ids[i],
                        endowment_size: o.endowment_size,
                        unique_count: o.unique_count,
                        shared_count: o.shared_count,
                        falsified: o.falsified,
                        distrust_observed: o.distrust_observed,
                        accuracy: o.accuracy,
                        bonus_cents: o.settlement.bonus,
                        cost_cents: o.settlement.cost,
                        net_cents: o.settlement.net,
                    });
                    used.push(states[i]);
                }
                states = outcome.next_states();
            }
            Ok((records, used, [(p1, states[0]), (p2, states[1])]))
        })
        .collect();

    let mut run = TreatmentRun {
        records: Vec::new(),
        states: Vec::new(),
        final_states: BTreeMap::new(),
    };
    for result in per_pair {
        let (records, used, finals) = result?;
        run.records.extend(records);
        run.states.extend(used);
        run.final_states.extend(finals);
    }
    Ok(run)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentPairing {
    pub treatment: TreatmentId,
    pub pairing: Pairing,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payout {
    pub participant: u32,
    pub treatment: TreatmentId,
    pub round: u32,
    pub net_cents: Cents,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionLog {
    pub session_id: u64,
    pub sequence: Sequence,
    pub records: Vec<RoundRecord>,
    pub pairings: Vec<TreatmentPairing>,
    /// Session-wide paid round, 1 to 64.
    pub paid_round: u32,
    pub payouts: Vec<Payout>,
}

/// Draws the session's paid round uniformly from 1 to 64.
pub fn draw_paid_round(seed: u64) -> u32 {
    derive(seed, &[label("paid-round")]).random_range(1..=ROUNDS_PER_SESSION)
}

pub fn run_session(config: &SessionConfig) -> Result<SessionLog, SessionError> {
    let roster = config.resolve_roster()?;
    let ids: Vec<u32> = (1..=config.participants).collect();
    let ctx = TreatmentContext {
        seed: config.seed,
        session_id: config.session_id(),
        sequence: config.sequence,
        conventions: config.conventions,
    };
    let mut records = Vec::with_capacity(config.participants as usize * ROUNDS_PER_SESSION as usize);
    let mut pairings = Vec::with_capacity(4);
    let mut previous: Option<Pairing> = None;
    let mut carried: BTreeMap<u32, LaggedState> = BTreeMap::new();

    for (position, t) in config.sequence.treatments().into_iter().enumerate() {
        let spec = TreatmentSpec::standard(t);
        let mut pair_rng = derive(config.seed, &[label("pairing"), position as u64]);
        let pairing = make_pairs(&ids, &mut pair_rng, previous.as_ref())?;
        let policies: BTreeMap<u32, AgentPolicy> = ids
            .iter()
            .map(|&id| (id, roster[id as usize - 1][t.index()].clone()))
            .collect();
        let seed_state = config
            .initial_lags
            .get(&t)
            .copied()
            .unwrap_or_else(|| LaggedState::initial(&spec));
        let start: BTreeMap<u32, LaggedState> = ids
            .iter()
            .map(|&id| {
                let s = match carried.get(&id) {
                    Some(prev) if config.carryover_lags => LaggedState {
                        first_round: true,
                        ..*prev
                    },
                    _ => seed_state,
                };
                (id, s)
            })
            .collect();
        let run = run_treatment(&pairing, &policies, &spec, &ctx, &start)?;
        carried = run.final_states;
        records.extend(run.records);
        pairings.push(TreatmentPairing {
            treatment: t,
            pairing: pairing.clone(),
        });
        previous = Some(pairing);
    }

    let paid_round = draw_paid_round(config.seed);
    let position = ((paid_round - 1) / 16) as usize;
    let paid_treatment = config.sequence.treatments()[position];
    let round_in_treatment = (paid_round - 1) % 16 + 1;
    let mut payouts: Vec<Payout> = records
        .iter()
        .filter(|r| r.treatment == paid_treatment && r.round == round_in_treatment)
        .map(|r| Payout {
            participant: r.player_id,
            treatment: r.treatment,
            round: r.round,
            net_cents: r.net_cents,
        })
        .collect();
    payouts.sort_by_key(|p| p.participant);

    Ok(SessionLog {
        session_id: ctx.session_id,
        sequence: config.sequence,
        records,
        pairings,
        paid_round,
        payouts,
    })
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes records with the fixed header; flags as 0/1, money in cents.
pub fn write_records<W: Write>(records: &[RoundRecord], out: W) -> Result<(), SessionError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.session_id.to_string().as_str(),
            r.sequence.to_string().as_str(),
            r.treatment.to_string().as_str(),
            r.pair_id.to_string().as_str(),
            r.round.to_string().as_str(),
            r.player_id.to_string().as_str(),
            r.endowment_size.to_string().as_str(),
            r.unique_count.to_string().as_str(),
            r.shared_count.to_string().as_str(),
            flag(r.falsified),
            flag(r.distrust_observed),
            flag(r.accuracy),
            r.bonus_cents.to_string().as_str(),
            r.cost_cents.to_string().as_str(),
            r.net_cents.to_string().as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_log(log: &SessionLog, path: &std::path::Path) -> Result<(), SessionError> {
    let file = std::fs::File::create(path)?;
    write_records(&log.records, std::io::BufWriter::new(file))
}

/// Parses a log written by [`write_records`]; the header must match exactly.
pub fn read_records<R: Read>(input: R) -> Result<Vec<RoundRecord>, SessionError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers()?.clone();
    for (i, expected) in CSV_HEADER.iter().enumerate() {
        match header.get(i) {
            Some(found) if found == *expected => {}
            Some(found) => {
                return Err(SessionError::Malformed {
                    row: 0,
                    reason: format!("header column {}: expected `{expected}`, found `{found}`", i + 1),
                })
            }
            None => {
                return Err(SessionError::Malformed {
                    row: 0,
                    reason: format!("header column {}: missing `{expected}`", i + 1),
                })
            }
        }
    }
    if header.len() > CSV_HEADER.len() {
        return Err(SessionError::Malformed {
            row: 0,
            reason: format!("unexpected extra header column `{}`", &header[CSV_HEADER.len()]),
        });
    }
    let mut out = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row = row?;
        let bad = |reason: String| SessionError::Malformed { row: k + 1, reason };
        if row.len() != CSV_HEADER.len() {
            return Err(bad(format!("expected {} fields, got {}", CSV_HEADER.len(), row.len())));
        }
        fn num<T: std::str::FromStr>(field: &str, name: &str) -> Result<T, String> {
            field
                .parse()
                .map_err(|_| format!("column {name}: cannot parse {field:?}"))
        }
        fn bit(field: &str, name: &str) -> Result<bool, String> {
            match field {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(format!("column {name}: expected 0 or 1, got {field:?}")),
            }
        }
        let parse = || -> Result<RoundRecord, String> {
            Ok(RoundRecord {
                session_id: num(&row[0], CSV_HEADER[0])?,
                sequence: row[1].parse().map_err(|e: GameError| e.to_string())?,
                treatment: row[2].parse().map_err(|e: GameError| e.to_string())?,
                pair_id: num(&row[3], CSV_HEADER[3])?,
                round: num(&row[4], CSV_HEADER[4])?,
                player_id: num(&row[5], CSV_HEADER[5])?,
                endowment_size: num(&row[6], CSV_HEADER[6])?,
                unique_count: num(&row[7], CSV_HEADER[7])?,
                shared_count: num(&row[8], CSV_HEADER[8])?,
                falsified: bit(&row[9], CSV_HEADER[9])?,
                distrust_observed: bit(&row[10], CSV_HEADER[10])?,
                accuracy: bit(&row[11], CSV_HEADER[11])?,
                bonus_cents: num(&row[12], CSV_HEADER[12])?,
                cost_cents: num(&row[13], CSV_HEADER[13])?,
                net_cents: num(&row[14], CSV_HEADER[14])?,
            })
        };
        out.push(parse().map_err(bad)?);
    }
    Ok(out)
}

pub fn import_log(path: &std::path::Path) -> Result<Vec<RoundRecord>, SessionError> {
    read_records(std::io::BufReader::new(std::fs::File::open(path)?))
}
