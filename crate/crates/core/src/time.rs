//! Monthly time keys. There is no day or timezone resolution anywhere.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Self {
        debug_assert!((1..=12).contains(&month), "month {month} out of range");
        Self { year, month }
    }

    /// Months since year 0, January.
    pub fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_index(idx: i64) -> Self {
        let year = idx.div_euclid(12) as i32;
        let month = (idx.rem_euclid(12) + 1) as u8;
        Self { year, month }
    }

    pub fn add_months(self, n: i64) -> Self {
        Self::from_index(self.index() + n)
    }

    pub fn sub_months(self, n: i64) -> Self {
        self.add_months(-n)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}
