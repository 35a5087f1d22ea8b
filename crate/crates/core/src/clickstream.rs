//! Raw click events and their reduction to labeled per-user week sequences.
//!
//! The raw logs carry eight event categories. Preprocessing maps them onto
//! seven click types, buckets each user's clicks into course weeks, marks the
//! week before a user's final active week as the dropout week and optionally
//! applies the Type A / Type B filters.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_WEEK: i64 = 7 * 24 * 60 * 60;
const SECONDS_PER_DAY: i64 = 24 * 60 * 60;

pub const DEFAULT_COURSE_LENGTH_WEEKS: u32 = 12;
/// Weeks with this many clicks or more are dropped by the Type B filter.
pub const TYPE_B_MAX_CLICKS: usize = 1000;
/// Type B keeps only users whose last active week is at least this.
pub const TYPE_B_MIN_LAST_WEEK: u32 = 4;

/// Event category as it appears in the raw logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RawCategory {
    Pageview,
    Quiz,
    Forum,
    Play,
    Pause,
    Seek,
    RateChg,
    Stalled,
}

impl RawCategory {
    pub const ALL: [RawCategory; 8] = [
        RawCategory::Pageview,
        RawCategory::Quiz,
        RawCategory::Forum,
        RawCategory::Play,
        RawCategory::Pause,
        RawCategory::Seek,
        RawCategory::RateChg,
        RawCategory::Stalled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RawCategory::Pageview => "Pageview",
            RawCategory::Quiz => "Quiz",
            RawCategory::Forum => "Forum",
            RawCategory::Play => "Play",
            RawCategory::Pause => "Pause",
            RawCategory::Seek => "Seek",
            RawCategory::RateChg => "RateChg",
            RawCategory::Stalled => "Stalled",
        }
    }
}

impl FromStr for RawCategory {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        RawCategory::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

/// Canonical click type. The declaration order is the total order used for
/// lexicographic tie-breaking of actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum ClickType {
    Pageview = 0,
    Quiz = 1,
    Forum = 2,
    Play = 3,
    Pause = 4,
    #[serde(alias = "SeekFW")]
    SeekFw = 5,
    #[serde(alias = "SeekBW")]
    SeekBw = 6,
}

impl ClickType {
    pub const COUNT: usize = 7;

    pub const ALL: [ClickType; ClickType::COUNT] = [
        ClickType::Pageview,
        ClickType::Quiz,
        ClickType::Forum,
        ClickType::Play,
        ClickType::Pause,
        ClickType::SeekFw,
        ClickType::SeekBw,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<ClickType> {
        ClickType::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClickType::Pageview => "Pageview",
            ClickType::Quiz => "Quiz",
            ClickType::Forum => "Forum",
            ClickType::Play => "Play",
            ClickType::Pause => "Pause",
            ClickType::SeekFw => "SeekFw",
            ClickType::SeekBw => "SeekBw",
        }
    }
}

impl fmt::Display for ClickType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClickType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ClickType::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown click type `{s}`"))
    }
}

/// One raw log record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClickEvent {
    pub user_id: String,
    pub timestamp: i64,
    pub category: RawCategory,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_before: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_after: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_before: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_after: Option<f64>,
}

impl ClickEvent {
    pub fn new(user_id: impl Into<String>, timestamp: i64, category: RawCategory) -> Self {
        ClickEvent {
            user_id: user_id.into(),
            timestamp,
            category,
            position_before: None,
            position_after: None,
            rate_before: None,
            rate_after: None,
        }
    }

    pub fn seek(user_id: impl Into<String>, timestamp: i64, before: f64, after: f64) -> Self {
        ClickEvent {
            position_before: Some(before),
            position_after: Some(after),
            ..ClickEvent::new(user_id, timestamp, RawCategory::Seek)
        }
    }

    pub fn rate_change(user_id: impl Into<String>, timestamp: i64, before: f64, after: f64) -> Self {
        ClickEvent {
            rate_before: Some(before),
            rate_after: Some(after),
            ..ClickEvent::new(user_id, timestamp, RawCategory::RateChg)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    user_id: String,
    timestamp: i64,
    category: String,
    #[serde(default)]
    position_before: Option<f64>,
    #[serde(default)]
    position_after: Option<f64>,
    #[serde(default)]
    rate_before: Option<f64>,
    #[serde(default)]
    rate_after: Option<f64>,
}

impl RawRecord {
    fn into_event(self, line: usize) -> Result<ClickEvent> {
        let parse_err = |message: String| Error::Parse { line, message };
        if self.timestamp < 0 {
            return Err(parse_err(format!("negative timestamp {}", self.timestamp)));
        }
        let category: RawCategory = self.category.parse().map_err(|_| Error::UnknownCategory {
            line,
            value: self.category.clone(),
        })?;
        match category {
            RawCategory::Seek if self.position_before.is_none() || self.position_after.is_none() => {
                return Err(parse_err("Seek missing positions".into()));
            }
            RawCategory::RateChg if self.rate_before.is_none() || self.rate_after.is_none() => {
                return Err(parse_err("RateChg missing rates".into()));
            }
            _ => {}
        }
        Ok(ClickEvent {
            user_id: self.user_id,
            timestamp: self.timestamp,
            category,
            position_before: self.position_before,
            position_after: self.position_after,
            rate_before: self.rate_before,
            rate_after: self.rate_after,
        })
    }
}

/// Parses a JSON Lines or CSV event log. Records come back in input order;
/// blank JSONL lines are skipped. Line numbers in errors are 1-based.
pub fn parse_events<R: Read>(input: R, format: EventFormat) -> Result<Vec<ClickEvent>> {
    match format {
        EventFormat::Jsonl => {
            let reader = std::io::BufReader::new(input);
            let mut events = Vec::new();
            for (idx, line) in reader.lines().enumerate() {
                let line_no = idx + 1;
                let line = line.map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
                events.push(record.into_event(line_no)?);
            }
            Ok(events)
        }
        EventFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
            let headers = reader.headers()?.clone();
            let mut events = Vec::new();
            for result in reader.records() {
                let row = result?;
                let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
                let record: RawRecord = row.deserialize(Some(&headers)).map_err(|e| Error::Parse {
                    line,
                    message: e.to_string(),
                })?;
                events.push(record.into_event(line)?);
            }
            Ok(events)
        }
    }
}

pub fn write_events_jsonl<W: Write>(mut out: W, events: &[ClickEvent]) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n").map_err(|e| Error::io("<events>", e))?;
    }
    Ok(())
}

/// Maps a raw event onto a click type. `None` means the event is dropped:
/// `Stalled`, and `Seek`/`RateChg` events whose position or rate did not change.
pub fn map_category(event: &ClickEvent) -> Option<ClickType> {
    let direction = |before: Option<f64>, after: Option<f64>| match (before, after) {
        (Some(b), Some(a)) if a > b => Some(ClickType::SeekFw),
        (Some(b), Some(a)) if a < b => Some(ClickType::SeekBw),
        _ => None,
    };
    match event.category {
        RawCategory::Pageview => Some(ClickType::Pageview),
        RawCategory::Quiz => Some(ClickType::Quiz),
        RawCategory::Forum => Some(ClickType::Forum),
        RawCategory::Play => Some(ClickType::Play),
        RawCategory::Pause => Some(ClickType::Pause),
        RawCategory::Seek => direction(event.position_before, event.position_after),
        RawCategory::RateChg => direction(event.rate_before, event.rate_after),
        RawCategory::Stalled => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeekSequence {
    pub user_id: String,
    /// 1-based course week.
    pub week_index: u32,
    pub clicks: Vec<ClickType>,
    pub dropout_label: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub user_id: String,
    /// Strictly increasing `week_index`; gaps allowed.
    pub weeks: Vec<WeekSequence>,
}

impl UserHistory {
    pub fn last_active_week(&self) -> Option<u32> {
        self.weeks.last().map(|w| w.week_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "raw")]
    Raw,
    #[serde(rename = "typeA")]
    TypeA,
    #[serde(rename = "typeB")]
    TypeB,
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "raw" => Ok(Variant::Raw),
            "typeA" | "typea" | "A" => Ok(Variant::TypeA),
            "typeB" | "typeb" | "B" => Ok(Variant::TypeB),
            other => Err(format!("unknown variant `{other}` (expected raw, typeA or typeB)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Sorted by `user_id`.
    pub users: Vec<UserHistory>,
    pub course_length_weeks: u32,
    pub variant: Variant,
}

impl Dataset {
    pub fn weeks(&self) -> impl Iterator<Item = &WeekSequence> {
        self.users.iter().flat_map(|u| u.weeks.iter())
    }
}

/// Midnight UTC of the day holding the earliest event.
pub fn default_course_start(events: &[ClickEvent]) -> Option<i64> {
    events
        .iter()
        .map(|e| e.timestamp)
        .min()
        .map(|t| t.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY)
}

/// Parses an ISO-8601 date (`2024-01-15`) or date-time (`2024-01-15T00:00:00Z`)
/// into seconds since the epoch.
pub fn parse_course_start(s: &str) -> std::result::Result<i64, String> {
    if let Ok(date) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(date
            .and_hms_opt(0, 0, 0)
            .expect("midnight is valid")
            .and_utc()
            .timestamp());
    }
    chrono::DateTime::parse_from_rfc3339(s)
        .map(|dt| dt.timestamp())
        .map_err(|_| format!("`{s}` is not an ISO-8601 date"))
}

/// Buckets one user's events into week sequences and assigns dropout labels.
///
/// Events are stably sorted by timestamp first. Weeks without any surviving
/// click are absent. If the user's last active week `t` precedes the final
/// course week, week `t - 1` (when present) is the positive week.
pub fn bucket_and_label(
    user_id: &str,
    events: &[ClickEvent],
    course_start: i64,
    course_length_weeks: u32,
) -> Result<Vec<WeekSequence>> {
    let mut order: Vec<&ClickEvent> = events.iter().collect();
    order.sort_by_key(|e| e.timestamp);

    let mut weeks: BTreeMap<u32, Vec<ClickType>> = BTreeMap::new();
    for event in order {
        if event.timestamp < course_start {
            return Err(Error::BeforeCourseStart {
                user_id: user_id.to_string(),
                timestamp: event.timestamp,
                course_start,
            });
        }
        let week = (event.timestamp - course_start) / SECONDS_PER_WEEK + 1;
        if week > course_length_weeks as i64 {
            return Err(Error::AfterCourseEnd {
                user_id: user_id.to_string(),
                timestamp: event.timestamp,
                week,
                course_length_weeks,
            });
        }
        if let Some(click) = map_category(event) {
            weeks.entry(week as u32).or_default().push(click);
        }
    }

    let last = weeks.keys().next_back().copied();
    let positive_week = match last {
        Some(t) if t < course_length_weeks && t >= 2 => Some(t - 1),
        _ => None,
    };
    Ok(weeks
        .into_iter()
        .map(|(week_index, clicks)| WeekSequence {
            user_id: user_id.to_string(),
            week_index,
            clicks,
            dropout_label: Some(week_index) == positive_week,
        })
        .collect())
}

/// Groups events by user and runs [`bucket_and_label`] on each. Users whose
/// events all map to nothing are omitted. Output is sorted by user id.
pub fn build_dataset(events: &[ClickEvent], course_start: Option<i64>, course_length_weeks: u32) -> Result<Dataset> {
    let start = match course_start.or_else(|| default_course_start(events)) {
        Some(s) => s,
        None => {
            return Ok(Dataset {
                users: Vec::new(),
                course_length_weeks,
                variant: Variant::Raw,
            })
        }
    };
    let mut by_user: BTreeMap<&str, Vec<ClickEvent>> = BTreeMap::new();
    for event in events {
        by_user.entry(&event.user_id).or_default().push(event.clone());
    }
    let grouped: Vec<(&str, Vec<ClickEvent>)> = by_user.into_iter().collect();
    let users = grouped
        .par_iter()
        .map(|(user_id, evs)| {
            bucket_and_label(user_id, evs, start, course_length_weeks).map(|weeks| UserHistory {
                user_id: user_id.to_string(),
                weeks,
            })
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|u| !u.weeks.is_empty())
        .collect();
    Ok(Dataset {
        users,
        course_length_weeks,
        variant: Variant::Raw,
    })
}

/// Applies the Type A or Type B filter. Type A drops weeks shorter than the
/// action size. Type B also drops weeks of 1,000 or more clicks and every user
/// whose last active week (before any week removal) is earlier than week 4.
/// Users left without weeks are removed. `Variant::Raw` returns a copy.
pub fn filter_dataset(dataset: &Dataset, variant: Variant, action_size: usize) -> Dataset {
    let users = dataset
        .users
        .iter()
        .filter(|u| variant != Variant::TypeB || u.last_active_week().is_some_and(|w| w >= TYPE_B_MIN_LAST_WEEK))
        .filter_map(|u| {
            let weeks: Vec<WeekSequence> = u
                .weeks
                .iter()
                .filter(|w| match variant {
                    Variant::Raw => true,
                    Variant::TypeA => w.clicks.len() >= action_size,
                    Variant::TypeB => w.clicks.len() >= action_size && w.clicks.len() < TYPE_B_MAX_CLICKS,
                })
                .cloned()
                .collect();
            (!weeks.is_empty()).then(|| UserHistory {
                user_id: u.user_id.clone(),
                weeks,
            })
        })
        .collect();
    Dataset {
        users,
        course_length_weeks: dataset.course_length_weeks,
        variant,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetStats {
    pub users: usize,
    pub weeks: usize,
    pub mean_weeks_per_user: f64,
    pub positive_labels: usize,
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let users = dataset.users.len();
    let weeks = dataset.weeks().count();
    let positive_labels = dataset.weeks().filter(|w| w.dropout_label).count();
    DatasetStats {
        users,
        weeks,
        mean_weeks_per_user: if users == 0 { 0.0 } else { weeks as f64 / users as f64 },
        positive_labels,
    }
}

#[derive(Serialize, Deserialize)]
struct WeekRecord {
    user_id: String,
    week_index: u32,
    clicks: Vec<ClickType>,
    label: u8,
}

pub fn write_dataset_jsonl<W: Write>(mut out: W, dataset: &Dataset) -> Result<()> {
    for week in dataset.weeks() {
        let record = WeekRecord {
            user_id: week.user_id.clone(),
            week_index: week.week_index,
            clicks: week.clicks.clone(),
            label: week.dropout_label as u8,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n").map_err(|e| Error::io("<dataset>", e))?;
    }
    Ok(())
}

/// Reads a processed dataset back. Weeks are regrouped by user and sorted.
pub fn read_dataset_jsonl<R: Read>(input: R, course_length_weeks: u32, variant: Variant) -> Result<Dataset> {
    let reader = std::io::BufReader::new(input);
    let mut by_user: BTreeMap<String, Vec<WeekSequence>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WeekRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.label > 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("label must be 0 or 1, got {}", rec.label),
            });
        }
        by_user.entry(rec.user_id.clone()).or_default().push(WeekSequence {
            user_id: rec.user_id,
            week_index: rec.week_index,
            clicks: rec.clicks,
            dropout_label: rec.label == 1,
        });
    }
    let users = by_user
        .into_iter()
        .map(|(user_id, mut weeks)| {
            weeks.sort_by_key(|w| w.week_index);
            UserHistory { user_id, weeks }
        })
        .collect();
    Ok(Dataset {
        users,
        course_length_weeks,
        variant,
    })
}
