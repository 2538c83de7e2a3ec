//! The categorical prompt variables and their full grid.

use crate::rng::{domain, stream};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::SynthError;

pub const GENDERS: [&str; 2] = ["male", "female"];
pub const TIMES: [&str; 3] = ["morning", "afternoon", "night"];
pub const AGE_GROUPS: [&str; 3] = ["between 55 and 59", "between 60 and 64", "over 65"];
pub const HOLIDAYS: [&str; 11] = [
    "New Year's Day",
    "Valentine's Day",
    "St. Patrick's Day",
    "Easter",
    "Mother's Day",
    "Father's Day",
    "Independence Day",
    "Halloween",
    "Thanksgiving",
    "Christmas Eve",
    "Christmas Day",
];
pub const VACATION_DAY: &str = "vacation day";
pub const WEEKDAYS: [&str; 7] = [
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
];
pub const SEASONS: [&str; 4] = ["spring", "summer", "autumn", "winter"];
pub const CHAT_APPS: [&str; 7] = [
    "Android Messages",
    "Facebook Messenger",
    "Snapchat",
    "Instagram",
    "WhatsApp",
    "Discord",
    "Telegram",
];

/// Integer ages 15 through 55 inclusive, then the three named groups.
pub fn ages() -> Vec<String> {
    (15..=55)
        .map(|a: u32| a.to_string())
        .chain(AGE_GROUPS.iter().map(|s| s.to_string()))
        .collect()
}

/// Holidays, the vacation day, then `"<Weekday> in the <season>"`.
pub fn days() -> Vec<String> {
    let mut out: Vec<String> = HOLIDAYS.iter().map(|s| s.to_string()).collect();
    out.push(VACATION_DAY.to_owned());
    for w in WEEKDAYS {
        for s in SEASONS {
            out.push(format!("{w} in the {s}"));
        }
    }
    out
}

/// Number of base combinations of (AGE, GENDER, TIME, DAY, CHAT-APP).
pub fn grid_size() -> usize {
    ages().len() * GENDERS.len() * TIMES.len() * days().len() * CHAT_APPS.len()
}

/// Values for the seven prompt variables. RECEIVER and TOPIC are filled in
/// by the model, in that order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariableAssignment {
    pub age: String,
    pub gender: String,
    pub time: String,
    pub day: String,
    pub chat_app: String,
    receiver: Option<String>,
    topic: Option<String>,
}

impl VariableAssignment {
    pub fn new(
        age: impl Into<String>,
        gender: impl Into<String>,
        time: impl Into<String>,
        day: impl Into<String>,
        chat_app: impl Into<String>,
    ) -> Self {
        VariableAssignment {
            age: age.into(),
            gender: gender.into(),
            time: time.into(),
            day: day.into(),
            chat_app: chat_app.into(),
            receiver: None,
            topic: None,
        }
    }

    /// Grid entry `index` in mixed radix, slowest to fastest:
    /// age, gender, time, day, app.
    pub fn at(index: usize) -> Self {
        let ages = ages();
        let days = days();
        let mut i = index % grid_size();
        let app = i % CHAT_APPS.len();
        i /= CHAT_APPS.len();
        let day = i % days.len();
        i /= days.len();
        let time = i % TIMES.len();
        i /= TIMES.len();
        let gender = i % GENDERS.len();
        i /= GENDERS.len();
        VariableAssignment::new(
            ages[i].clone(),
            GENDERS[gender],
            TIMES[time],
            days[day].clone(),
            CHAT_APPS[app],
        )
    }

    pub fn receiver(&self) -> Option<&str> {
        self.receiver.as_deref()
    }

    pub fn topic(&self) -> Option<&str> {
        self.topic.as_deref()
    }

    /// Sets RECEIVER, clearing any topic chosen for a previous receiver.
    pub fn with_receiver(&self, receiver: impl Into<String>) -> Self {
        VariableAssignment {
            receiver: Some(receiver.into()),
            topic: None,
            ..self.clone()
        }
    }

    pub fn with_topic(&self, topic: impl Into<String>) -> Result<Self, SynthError> {
        if self.receiver.is_none() {
            return Err(SynthError::ChainOrder("topic set before receiver"));
        }
        Ok(VariableAssignment {
            topic: Some(topic.into()),
            ..self.clone()
        })
    }

    /// Stable textual key, used for ordering and metadata.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.age, self.gender, self.time, self.day, self.chat_app
        )
    }
}

/// Every base assignment, receiver and topic unset.
pub fn enumerate_variable_grid() -> impl Iterator<Item = VariableAssignment> {
    (0..grid_size()).map(VariableAssignment::at)
}

/// `n` distinct grid entries chosen uniformly at random, in grid order.
/// `n` larger than the grid wraps around with fresh draws.
pub fn sample_assignments(seed: u64, n: usize) -> Vec<VariableAssignment> {
    let size = grid_size();
    let mut out = Vec::with_capacity(n);
    let mut round = 0u64;
    while out.len() < n {
        let take = (n - out.len()).min(size);
        let mut rng = stream(seed, &[domain::SYNTH, u64::MAX, round]);
        let mut idx = sample(&mut rng, size, take).into_vec();
        idx.sort_unstable();
        out.extend(idx.into_iter().map(VariableAssignment::at));
        round += 1;
    }
    out
}
