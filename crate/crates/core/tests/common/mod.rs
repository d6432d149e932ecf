#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use infoshare::game_core::{
    draw_endowments, settle_round, CompleteDatabase, CueProfile, DatabaseEntry, EndowmentMode,
    FalsificationConvention, RoundRecord, Sequence, TieBreak, TreatmentSpec,
};
use infoshare::rng::{derive, label, SimRng};
use infoshare::session::{run_session, RosterPolicy, SessionConfig};

/// Strategy as the oracle understands it, parsed from labels like
/// `(F1,distrust)`.
#[derive(Clone, Copy, Debug)]
pub struct OracleStrategy {
    pub shares: usize,
    pub falsify: bool,
    pub trust: bool,
}

pub fn parse_strategy(label: &str) -> OracleStrategy {
    let inner = label.trim_start_matches('(').trim_end_matches(')');
    let (act, resp) = inner.split_once(',').expect("label");
    let (falsify, shares) = match act {
        "S0" => (false, 0),
        "S1" => (false, 1),
        "S2" => (false, 2),
        "F1" => (true, 1),
        "F2" => (true, 2),
        other => panic!("unknown action {other}"),
    };
    OracleStrategy {
        shares,
        falsify,
        trust: resp == "trust",
    }
}

fn sent(s: OracleStrategy, own: &[DatabaseEntry], conv: FalsificationConvention, rng: &mut SimRng) -> Vec<DatabaseEntry> {
    let mut mine = own.to_vec();
    mine.shuffle(rng);
    mine.truncate(s.shares);
    if !s.falsify {
        return mine;
    }
    match conv {
        FalsificationConvention::Deceptive => mine
            .into_iter()
            .map(|e| DatabaseEntry::new(e.cue, !e.target))
            .collect(),
        FalsificationConvention::Fabricate => {
            let mut outside: Vec<DatabaseEntry> = DatabaseEntry::all()
                .into_iter()
                .filter(|t| !own.contains(t))
                .collect();
            outside.shuffle(rng);
            outside.truncate(s.shares);
            outside
        }
    }
}

fn accurate(own: &[DatabaseEntry], received: &[DatabaseEntry], db: &CompleteDatabase, rng: &mut SimRng) -> bool {
    CueProfile::ALL.iter().all(|&cue| {
        let guess = if let Some(e) = own.iter().find(|e| e.cue == cue) {
            e.target
        } else {
            let cover: Vec<bool> = received.iter().filter(|e| e.cue == cue).map(|e| e.target).collect();
            if !cover.is_empty() && cover.iter().all(|&t| t == cover[0]) {
                cover[0]
            } else {
                rng.random::<bool>()
            }
        };
        guess == db.target(cue)
    })
}

pub struct CellEstimate {
    pub mean: [f64; 2],
    pub se: [f64; 2],
}

/// Plays one strategy pair `draws` times with the game primitives and
/// returns mean net payoffs with their standard errors.
pub fn simulate_cell(
    row: OracleStrategy,
    col: OracleStrategy,
    treatment: &TreatmentSpec,
    conv: FalsificationConvention,
    draws: usize,
    rng: &mut SimRng,
) -> CellEstimate {
    let mut sum = [0.0f64; 2];
    let mut sq = [0.0f64; 2];
    let strategies = [row, col];
    for _ in 0..draws {
        let db = CompleteDatabase::random(rng);
        let (e1, e2) = draw_endowments(&db, EndowmentMode::Partition, rng);
        let own = [e1.entries().to_vec(), e2.entries().to_vec()];
        let msgs = [
            sent(strategies[0], &own[0], conv, rng),
            sent(strategies[1], &own[1], conv, rng),
        ];
        let acc: Vec<bool> = (0..2)
            .map(|i| {
                let received: &[DatabaseEntry] = if strategies[i].trust { &msgs[1 - i] } else { &[] };
                accurate(&own[i], received, &db, rng)
            })
            .collect();
        let s = settle_round(
            treatment,
            [msgs[0].len(), msgs[1].len()],
            [acc[0], acc[1]],
            TieBreak::Random,
            rng,
        )
        .expect("valid counts");
        for i in 0..2 {
            let v = s[i].net as f64;
            sum[i] += v;
            sq[i] += v * v;
        }
    }
    let n = draws as f64;
    let mean = sum.map(|s| s / n);
    let se = [0, 1].map(|i| ((sq[i] / n - mean[i] * mean[i]).max(0.0) / (n - 1.0)).sqrt());
    CellEstimate { mean, se }
}

/// Records from `seeds` calibrated sessions, alternating treatment order.
pub fn calibrated_records(seeds: u64, participants: u32) -> Vec<RoundRecord> {
    let mut out = Vec::new();
    for k in 0..seeds {
        let sequence = if k % 2 == 0 { Sequence::Abcd } else { Sequence::Badc };
        let mut c = SessionConfig::uniform(
            infoshare::rng::stream_key(20240607, &[label("calibrated"), k]),
            participants,
            sequence,
            RosterPolicy::Calibrated,
        );
        c.session_id = Some(k + 1);
        out.extend(run_session(&c).expect("session").records);
    }
    out
}

pub fn rng(seed: u64, name: &str) -> SimRng {
    derive(seed, &[label(name)])
}
