//! Calendar arithmetic: relative time tokens, period offsets and window shifts.
//!
//! Relative windows never include the current day. Data for "today" is
//! assumed not to be loaded yet, so every window ends at `today - 1`.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use chrono::{Datelike, Days, Months, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Calendar unit of an [`Offset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Day,
    Week,
    Month,
    Year,
}

impl TimeUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeUnit::Day => "day",
            TimeUnit::Week => "week",
            TimeUnit::Month => "month",
            TimeUnit::Year => "year",
        }
    }
}

/// A backwards distance in calendar units, e.g. one week.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Offset {
    pub unit: TimeUnit,
    pub count: u32,
}

impl Offset {
    pub const fn new(unit: TimeUnit, count: u32) -> Self {
        Self { unit, count }
    }

    /// `date - self`. Month and year steps clamp the day of month, so
    /// March 31st minus one month is the last day of February.
    pub fn before(&self, date: NaiveDate) -> Option<NaiveDate> {
        match self.unit {
            TimeUnit::Day => date.checked_sub_days(Days::new(u64::from(self.count))),
            TimeUnit::Week => date.checked_sub_days(Days::new(7 * u64::from(self.count))),
            TimeUnit::Month => date.checked_sub_months(Months::new(self.count)),
            TimeUnit::Year => date.checked_sub_months(Months::new(self.count.checked_mul(12)?)),
        }
    }

    /// `date + self`, clamping the day of month like [`Offset::before`].
    pub fn after(&self, date: NaiveDate) -> Option<NaiveDate> {
        match self.unit {
            TimeUnit::Day => date.checked_add_days(Days::new(u64::from(self.count))),
            TimeUnit::Week => date.checked_add_days(Days::new(7 * u64::from(self.count))),
            TimeUnit::Month => date.checked_add_months(Months::new(self.count)),
            TimeUnit::Year => date.checked_add_months(Months::new(self.count.checked_mul(12)?)),
        }
    }

    /// Short tag used to name derived tables, e.g. `1Week`.
    pub fn tag(&self) -> String {
        let unit = match self.unit {
            TimeUnit::Day => "Day",
            TimeUnit::Week => "Week",
            TimeUnit::Month => "Month",
            TimeUnit::Year => "Year",
        };
        format!("{}{}", self.count, unit)
    }
}

/// An inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    /// Number of days covered, counting both endpoints.
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Moves both endpoints of `window` back by `offset`.
///
/// Returns `None` only when the result leaves chrono's representable range.
pub fn shift_window(window: DateRange, offset: Offset) -> Option<DateRange> {
    Some(DateRange::new(
        offset.before(window.start)?,
        offset.before(window.end)?,
    ))
}

/// Relative time expressions recognised in utterances.
///
/// The wire form is a snake_case token such as `last_7_days` or `yesterday`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelativeTime {
    Yesterday,
    LastDays(u32),
    LastWeeks(u32),
    LastMonths(u32),
    ThisWeek,
    ThisMonth,
    ThisYear,
    PreviousWeek,
    PreviousMonth,
    PreviousYear,
}

impl RelativeTime {
    /// Resolves the token against `today`. The window ends yesterday; windows
    /// that would start after that (e.g. `this_month` on the 1st) collapse to
    /// yesterday alone.
    pub fn resolve(self, today: NaiveDate) -> Option<DateRange> {
        let yesterday = today.pred_opt()?;
        let (start, end) = match self {
            RelativeTime::Yesterday => (yesterday, yesterday),
            RelativeTime::LastDays(n) => (Offset::new(TimeUnit::Day, n).before(today)?, yesterday),
            RelativeTime::LastWeeks(n) => {
                (Offset::new(TimeUnit::Week, n).before(today)?, yesterday)
            }
            RelativeTime::LastMonths(n) => {
                (Offset::new(TimeUnit::Month, n).before(today)?, yesterday)
            }
            RelativeTime::ThisWeek => (week_start(today)?, yesterday),
            RelativeTime::ThisMonth => (today.with_day(1)?, yesterday),
            RelativeTime::ThisYear => (today.with_ordinal(1)?, yesterday),
            RelativeTime::PreviousWeek => {
                let this_monday = week_start(today)?;
                let start = this_monday.checked_sub_days(Days::new(7))?;
                (start, this_monday.pred_opt()?)
            }
            RelativeTime::PreviousMonth => {
                let first = today.with_day(1)?;
                (first.checked_sub_months(Months::new(1))?, first.pred_opt()?)
            }
            RelativeTime::PreviousYear => {
                let first = today.with_ordinal(1)?;
                (
                    NaiveDate::from_ymd_opt(today.year() - 1, 1, 1)?,
                    first.pred_opt()?,
                )
            }
        };
        Some(DateRange::new(start.min(end), end))
    }

    /// Natural phrase that the term extractor maps back to this token.
    pub fn phrase(self) -> String {
        match self {
            RelativeTime::Yesterday => "yesterday".into(),
            RelativeTime::LastDays(n) => format!("past {n} days"),
            RelativeTime::LastWeeks(n) => format!("past {n} weeks"),
            RelativeTime::LastMonths(n) => format!("past {n} months"),
            RelativeTime::ThisWeek => "this week".into(),
            RelativeTime::ThisMonth => "this month".into(),
            RelativeTime::ThisYear => "this year".into(),
            RelativeTime::PreviousWeek => "last week".into(),
            RelativeTime::PreviousMonth => "last month".into(),
            RelativeTime::PreviousYear => "last year".into(),
        }
    }
}

fn week_start(date: NaiveDate) -> Option<NaiveDate> {
    date.checked_sub_days(Days::new(u64::from(date.weekday().num_days_from_monday())))
}

impl fmt::Display for RelativeTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelativeTime::Yesterday => f.write_str("yesterday"),
            RelativeTime::LastDays(n) => write!(f, "last_{n}_days"),
            RelativeTime::LastWeeks(n) => write!(f, "last_{n}_weeks"),
            RelativeTime::LastMonths(n) => write!(f, "last_{n}_months"),
            RelativeTime::ThisWeek => f.write_str("this_week"),
            RelativeTime::ThisMonth => f.write_str("this_month"),
            RelativeTime::ThisYear => f.write_str("this_year"),
            RelativeTime::PreviousWeek => f.write_str("previous_week"),
            RelativeTime::PreviousMonth => f.write_str("previous_month"),
            RelativeTime::PreviousYear => f.write_str("previous_year"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown relative time token `{0}`")]
pub struct UnknownTimeToken(pub String);

impl FromStr for RelativeTime {
    type Err = UnknownTimeToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fixed = match s {
            "yesterday" => Some(RelativeTime::Yesterday),
            "this_week" => Some(RelativeTime::ThisWeek),
            "this_month" => Some(RelativeTime::ThisMonth),
            "this_year" => Some(RelativeTime::ThisYear),
            "previous_week" => Some(RelativeTime::PreviousWeek),
            "previous_month" => Some(RelativeTime::PreviousMonth),
            "previous_year" => Some(RelativeTime::PreviousYear),
            _ => None,
        };
        if let Some(t) = fixed {
            return Ok(t);
        }
        let err = || UnknownTimeToken(s.into());
        let rest = s.strip_prefix("last_").ok_or_else(err)?;
        let (n, unit) = rest.split_once('_').ok_or_else(err)?;
        let n: u32 = n.parse().map_err(|_| err())?;
        if n == 0 {
            return Err(err());
        }
        match unit {
            "days" => Ok(RelativeTime::LastDays(n)),
            "weeks" => Ok(RelativeTime::LastWeeks(n)),
            "months" => Ok(RelativeTime::LastMonths(n)),
            _ => Err(err()),
        }
    }
}

impl Serialize for RelativeTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RelativeTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    /// Month subtraction by walking backwards one day at a time until the
    /// month index drops by one, then clamping to the source day.
    fn month_back_by_enumeration(date: NaiveDate) -> NaiveDate {
        let target_month = if date.month() == 1 {
            12
        } else {
            date.month() - 1
        };
        let mut cur = date;
        while cur.month() != target_month {
            cur = cur.pred_opt().unwrap();
        }
        // `cur` is now the last day of the previous month.
        while cur.day() > date.day() {
            cur = cur.pred_opt().unwrap();
        }
        cur
    }

    #[test]
    fn shift_week_and_day() {
        let w = DateRange::new(d(2024, 1, 19), d(2024, 1, 25));
        assert_eq!(
            shift_window(w, Offset::new(TimeUnit::Week, 1)).unwrap(),
            DateRange::new(d(2024, 1, 12), d(2024, 1, 18))
        );
        assert_eq!(
            shift_window(w, Offset::new(TimeUnit::Day, 1)).unwrap(),
            DateRange::new(d(2024, 1, 18), d(2024, 1, 24))
        );
    }

    #[test]
    fn shift_month_clamps() {
        let expected = month_back_by_enumeration(d(2024, 3, 31));
        assert_eq!(expected, d(2024, 2, 29));
        let w = DateRange::new(d(2024, 3, 31), d(2024, 3, 31));
        assert_eq!(
            shift_window(w, Offset::new(TimeUnit::Month, 1)).unwrap(),
            DateRange::new(expected, expected)
        );
    }

    #[test]
    fn month_back_matches_enumeration() {
        let mut date = d(2023, 1, 1);
        while date < d(2025, 1, 1) {
            assert_eq!(
                Offset::new(TimeUnit::Month, 1).before(date).unwrap(),
                month_back_by_enumeration(date),
                "{date}"
            );
            date = date.succ_opt().unwrap();
        }
    }

    #[test]
    fn relative_windows_end_yesterday() {
        let today = d(2024, 1, 26);
        assert_eq!(
            RelativeTime::LastDays(7).resolve(today).unwrap(),
            DateRange::new(d(2024, 1, 19), d(2024, 1, 25))
        );
        assert_eq!(
            RelativeTime::LastDays(3).resolve(today).unwrap(),
            DateRange::new(d(2024, 1, 23), d(2024, 1, 25))
        );
        assert_eq!(
            RelativeTime::Yesterday.resolve(today).unwrap(),
            DateRange::new(d(2024, 1, 25), d(2024, 1, 25))
        );
        // 2024-01-26 is a Friday.
        assert_eq!(
            RelativeTime::PreviousWeek.resolve(today).unwrap(),
            DateRange::new(d(2024, 1, 15), d(2024, 1, 21))
        );
        assert_eq!(
            RelativeTime::PreviousMonth.resolve(today).unwrap(),
            DateRange::new(d(2023, 12, 1), d(2023, 12, 31))
        );
        assert_eq!(
            RelativeTime::ThisMonth.resolve(d(2024, 2, 1)).unwrap(),
            DateRange::new(d(2024, 1, 31), d(2024, 1, 31))
        );
    }

    #[test]
    fn token_round_trip() {
        for t in [
            RelativeTime::Yesterday,
            RelativeTime::LastDays(7),
            RelativeTime::LastWeeks(2),
            RelativeTime::LastMonths(3),
            RelativeTime::ThisYear,
            RelativeTime::PreviousMonth,
        ] {
            assert_eq!(t.to_string().parse::<RelativeTime>().unwrap(), t);
        }
        assert!("last_0_days".parse::<RelativeTime>().is_err());
        assert!("tomorrow".parse::<RelativeTime>().is_err());
    }
}
