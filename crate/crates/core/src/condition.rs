// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experimental conditions: a (language, order) cell such as `en-fwd`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Zh,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::En, Language::Zh];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Zh => "zh",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = ParseConditionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "zh" => Ok(Language::Zh),
            other => Err(ParseConditionError(format!("unknown language `{other}`"))),
        }
    }
}

/// Causal order of the chain statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    /// cause → intermediate → final
    Forward,
    /// final → intermediate → cause
    Reversed,
}

impl Order {
    pub const ALL: [Order; 2] = [Order::Forward, Order::Reversed];

    pub fn as_str(self) -> &'static str {
        match self {
            Order::Forward => "forward",
            Order::Reversed => "reversed",
        }
    }

    /// Short tag used in condition labels (`fwd` / `rev`).
    pub fn short(self) -> &'static str {
        match self {
            Order::Forward => "fwd",
            Order::Reversed => "rev",
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Order {
    type Err = ParseConditionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "forward" | "fwd" => Ok(Order::Forward),
            "reversed" | "rev" | "reverse" => Ok(Order::Reversed),
            other => Err(ParseConditionError(format!("unknown order `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ParseConditionError(String);

/// One experimental cell. Ordered `en-fwd < zh-fwd < en-rev < zh-rev`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Condition {
    pub language: Language,
    pub order: Order,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::new(Language::En, Order::Forward),
        Condition::new(Language::Zh, Order::Forward),
        Condition::new(Language::En, Order::Reversed),
        Condition::new(Language::Zh, Order::Reversed),
    ];

    pub const fn new(language: Language, order: Order) -> Self {
        Condition { language, order }
    }

    pub fn label(self) -> String {
        format!("{}-{}", self.language, self.order.short())
    }
}

impl PartialOrd for Condition {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Condition {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.order, self.language).cmp(&(other.order, other.language))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.language, self.order.short())
    }
}

impl FromStr for Condition {
    type Err = ParseConditionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lang, order) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| ParseConditionError(format!("condition `{s}` is not `<lang>-<order>`")))?;
        Ok(Condition::new(lang.parse()?, order.parse()?))
    }
}

impl TryFrom<String> for Condition {
    type Error = ParseConditionError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> Self {
        c.label()
    }
}
