//! Calendar months as a single integer index: `year * 12 + (month - 1)`.

use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Month(pub i64);

impl Month {
    pub fn from_year_month(year: i64, month: u32) -> Option<Self> {
        if !(1..=12).contains(&month) || year < 0 {
            return None;
        }
        Some(Month(year * 12 + month as i64 - 1))
    }

    pub fn year(self) -> i64 {
        self.0.div_euclid(12)
    }

    /// Month of year, January = 1.
    pub fn month_of_year(self) -> u32 {
        (self.0.rem_euclid(12) + 1) as u32
    }
}

/// Month of year (1..=12) for a raw month index.
pub fn month_of_year(index: i64) -> u32 {
    Month(index).month_of_year()
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month_of_year())
    }
}

impl FromStr for Month {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("malformed month `{s}`, expected YYYY-MM"))?;
        if y.len() != 4 || m.len() != 2 {
            return Err(format!("malformed month `{s}`, expected YYYY-MM"));
        }
        let year: i64 = y.parse().map_err(|_| format!("malformed year in `{s}`"))?;
        let month: u32 = m.parse().map_err(|_| format!("malformed month in `{s}`"))?;
        Month::from_year_month(year, month).ok_or_else(|| format!("month out of range in `{s}`"))
    }
}
