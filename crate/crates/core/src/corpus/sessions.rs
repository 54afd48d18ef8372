use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::schema::{Dataset, Label};

/// Activity of one unique visitor. Amounts are integer cents so totals are
/// exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserActivity {
    pub user: u32,
    pub clicks: u64,
    pub orderlines: u64,
    pub gmv_cents: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SessionLog {
    pub users: Vec<UserActivity>,
    pub seed: u64,
    pub provenance: String,
}

impl SessionLog {
    pub fn uv(&self) -> u64 {
        self.users.len() as u64
    }

    pub fn total_clicks(&self) -> u64 {
        self.users.iter().map(|u| u.clicks).sum()
    }

    pub fn total_orderlines(&self) -> u64 {
        self.users.iter().map(|u| u.orderlines).sum()
    }

    pub fn total_gmv_cents(&self) -> u64 {
        self.users.iter().map(|u| u.gmv_cents).sum()
    }
}

const MEAN_IMPRESSIONS: u32 = 10;
const P_ORDER_GIVEN_CLICK: f64 = 0.2;

fn click_probability(label: Label) -> f64 {
    match label {
        Label::Exact => 0.5,
        Label::Significant => 0.35,
        Label::Marginal => 0.15,
        Label::Trivial => 0.05,
        Label::Irrelevant => 0.01,
    }
}

/// Simulates `n_users` visitors, each shown a random number of impressions
/// drawn from `d`. Clicks follow the relevance grade; a click converts to an
/// orderline with fixed probability at a uniform price of 10–500.
pub fn gen_session_log(d: &Dataset, n_users: usize, seed: u64) -> Result<SessionLog> {
    if n_users == 0 {
        return Err(Error::InvalidArgument("session log needs at least one user".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = (0..n_users as u32)
        .map(|user| {
            let mut a = UserActivity {
                user,
                clicks: 0,
                orderlines: 0,
                gmv_cents: 0,
            };
            if d.is_empty() {
                return a;
            }
            let impressions = rng.gen_range(0..=2 * MEAN_IMPRESSIONS);
            for _ in 0..impressions {
                let e = d.examples.choose(&mut rng).unwrap();
                if rng.gen_bool(click_probability(e.label)) {
                    a.clicks += 1;
                    if rng.gen_bool(P_ORDER_GIVEN_CLICK) {
                        a.orderlines += 1;
                        a.gmv_cents += rng.gen_range(1_000..=50_000);
                    }
                }
            }
            a
        })
        .collect();
    Ok(SessionLog {
        users,
        seed,
        provenance: String::new(),
    })
}

pub fn write_session_log(log: &SessionLog, path: impl AsRef<Path>) -> Result<()> {
    let mut header = format!("sessions seed={}", log.seed);
    if !log.provenance.is_empty() {
        header.push_str(&format!(" provenance={}", log.provenance));
    }
    jsonl::write(path.as_ref(), Some(&header), &log.users)
}

pub fn read_session_log(path: impl AsRef<Path>) -> Result<SessionLog> {
    let path = path.as_ref();
    let (header, users) = jsonl::read(path)?;
    let mut log = SessionLog {
        users,
        ..SessionLog::default()
    };
    let fields = header.as_deref().and_then(|h| h.strip_prefix("sessions")).unwrap_or("");
    for field in fields.split_whitespace() {
        match field.split_once('=') {
            Some(("seed", v)) => log.seed = v.parse().map_err(|_| Error::parse(path, 1, "bad seed"))?,
            Some(("provenance", v)) => log.provenance = v.to_string(),
            _ => return Err(Error::parse(path, 1, format!("unrecognised header field {field:?}"))),
        }
    }
    Ok(log)
}
