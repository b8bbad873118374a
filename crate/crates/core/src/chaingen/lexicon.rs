// SPDX-License-Identifier: MIT OR Apache-2.0

//! Lexicon loading and validation.
//!
//! File format (UTF-8 JSON):
//!
//! ```json
//! { "version": "1.0.0",
//!   "provenance": "optional note",
//!   "domains": { "household_routine": [
//!       { "key": "house-001",
//!         "en": { "s1": "toaster", "v1": "heats", "s2": "bread", "v2": "toasts", "s3": "aroma", "v3": "spreads" },
//!         "zh": { "s1": "面包机", "v1": "加热", "s2": "面包", "v2": "烤熟", "s3": "香气", "v3": "扩散" } } ] } }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Domain;
use crate::condition::Language;

/// Minimum number of triples required per domain.
pub const MIN_TRIPLES_PER_DOMAIN: usize = 50;

const DEFAULT_LEXICON: &str = include_str!("../../data/default_lexicon.json");

/// English connectives as lowercase word sequences.
const EN_CONNECTIVES: &[&[&str]] = &[
    &["once"],
    &["then"],
    &["if"],
    &["therefore"],
    &["due", "to"],
    &["which", "originates", "from"],
];

const ZH_CONNECTIVES: &[&str] = &["一旦", "然后", "如果", "因此", "是由于", "而这源自"];

/// Subject and verb phrase of one chain step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub subject: String,
    pub verb: String,
}

/// The six phrases of a chain in one language, cause first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainPhrases {
    pub steps: [Step; 3],
}

impl ChainPhrases {
    pub fn cause(&self) -> &Step {
        &self.steps[0]
    }

    pub fn intermediate(&self) -> &Step {
        &self.steps[1]
    }

    pub fn final_effect(&self) -> &Step {
        &self.steps[2]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalTriple {
    pub domain: Domain,
    pub key: String,
    pub en: ChainPhrases,
    pub zh: ChainPhrases,
}

impl CausalTriple {
    pub fn phrases(&self, language: Language) -> &ChainPhrases {
        match language {
            Language::En => &self.en,
            Language::Zh => &self.zh,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub version: String,
    pub provenance: Option<String>,
    domains: BTreeMap<Domain, Vec<CausalTriple>>,
}

impl Lexicon {
    /// The curated lexicon shipped with the crate.
    pub fn bundled() -> Lexicon {
        Lexicon::from_json_str(DEFAULT_LEXICON, "<bundled>")
            .expect("bundled lexicon is valid")
    }

    /// Raw JSON of the bundled lexicon.
    pub fn bundled_json() -> &'static str {
        DEFAULT_LEXICON
    }

    pub fn from_json_str(text: &str, source: &str) -> Result<Lexicon, LexiconError> {
        let raw: RawLexicon = serde_json::from_str(text).map_err(|e| LexiconError::Parse {
            source_name: source.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        raw.validate()
    }

    pub fn domains(&self) -> &BTreeMap<Domain, Vec<CausalTriple>> {
        &self.domains
    }

    /// All triples in domain order, then file order.
    pub fn triples(&self) -> impl Iterator<Item = &CausalTriple> {
        self.domains.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.domains.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<&CausalTriple> {
        self.triples().find(|t| t.key == key)
    }
}

/// Read and validate a lexicon file.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| LexiconError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Lexicon::from_json_str(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {message}")]
    Io { path: String, message: String },
    #[error("lexicon {source_name} does not parse (line {line}, column {column}): {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("lexicon is invalid:\n{}", format_issues(.0))]
    Invalid(Vec<LexiconIssue>),
}

impl LexiconError {
    pub fn issues(&self) -> &[LexiconIssue] {
        match self {
            LexiconError::Invalid(issues) => issues,
            _ => &[],
        }
    }
}

fn format_issues(issues: &[LexiconIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  - {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// A single validation problem with its location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexiconIssue {
    UnknownDomain { name: String },
    DomainCount { found: usize, missing: Vec<Domain> },
    TooFewTriples { domain: Domain, found: usize },
    DuplicateKey { key: String, first: String, second: String },
    EmptyPhrase { key: String, field: String },
    ConnectiveContamination { key: String, field: String, connective: String },
    RepeatedStep { key: String, language: Language },
}

impl fmt::Display for LexiconIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LexiconIssue::UnknownDomain { name } => write!(f, "unknown domain `{name}`"),
            LexiconIssue::DomainCount { found, missing } => {
                let names: Vec<_> = missing.iter().map(|d| d.as_str()).collect();
                write!(f, "expected 8 domains, found {found}; missing: {}", names.join(", "))
            }
            LexiconIssue::TooFewTriples { domain, found } => write!(
                f,
                "domain `{domain}` has {found} triples, at least {MIN_TRIPLES_PER_DOMAIN} required"
            ),
            LexiconIssue::DuplicateKey { key, first, second } => {
                write!(f, "duplicate key `{key}` at {first} and {second}")
            }
            LexiconIssue::EmptyPhrase { key, field } => write!(f, "triple `{key}`: `{field}` is empty"),
            LexiconIssue::ConnectiveContamination { key, field, connective } => write!(
                f,
                "triple `{key}`: `{field}` contains template connective `{connective}`"
            ),
            LexiconIssue::RepeatedStep { key, language } => {
                write!(f, "triple `{key}`: repeated subject-verb pair in `{language}`")
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawLexicon {
    version: String,
    #[serde(default)]
    provenance: Option<String>,
    domains: BTreeMap<String, Vec<RawTriple>>,
}

#[derive(Debug, Deserialize)]
struct RawTriple {
    key: String,
    en: RawPhrases,
    zh: RawPhrases,
}

#[derive(Debug, Deserialize)]
struct RawPhrases {
    s1: String,
    v1: String,
    s2: String,
    v2: String,
    s3: String,
    v3: String,
}

impl RawPhrases {
    fn fields(&self) -> [(&'static str, &str); 6] {
        [
            ("s1", &self.s1),
            ("v1", &self.v1),
            ("s2", &self.s2),
            ("v2", &self.v2),
            ("s3", &self.s3),
            ("v3", &self.v3),
        ]
    }

    fn into_chain(self) -> ChainPhrases {
        let step = |subject: String, verb: String| Step { subject, verb };
        ChainPhrases {
            steps: [
                step(self.s1, self.v1),
                step(self.s2, self.v2),
                step(self.s3, self.v3),
            ],
        }
    }
}

impl RawLexicon {
    fn validate(self) -> Result<Lexicon, LexiconError> {
        let mut issues = Vec::new();
        let mut domains = BTreeMap::new();
        let mut seen_keys: HashMap<String, String> = HashMap::new();

        for (name, triples) in self.domains {
            let Ok(domain) = name.parse::<Domain>() else {
                issues.push(LexiconIssue::UnknownDomain { name });
                continue;
            };
            if triples.len() < MIN_TRIPLES_PER_DOMAIN {
                issues.push(LexiconIssue::TooFewTriples {
                    domain,
                    found: triples.len(),
                });
            }
            let mut parsed = Vec::with_capacity(triples.len());
            for (index, raw) in triples.into_iter().enumerate() {
                let location = format!("domains.{domain}[{index}]");
                if let Some(first) = seen_keys.insert(raw.key.clone(), location.clone()) {
                    issues.push(LexiconIssue::DuplicateKey {
                        key: raw.key.clone(),
                        first,
                        second: location,
                    });
                }
                check_phrases(&raw.key, Language::En, &raw.en, &mut issues);
                check_phrases(&raw.key, Language::Zh, &raw.zh, &mut issues);
                parsed.push(CausalTriple {
                    domain,
                    key: raw.key,
                    en: raw.en.into_chain(),
                    zh: raw.zh.into_chain(),
                });
            }
            domains.insert(domain, parsed);
        }

        if domains.len() != Domain::ALL.len() {
            let missing = Domain::ALL
                .into_iter()
                .filter(|d| !domains.contains_key(d))
                .collect();
            issues.push(LexiconIssue::DomainCount {
                found: domains.len(),
                missing,
            });
        }

        if issues.is_empty() {
            Ok(Lexicon {
                version: self.version,
                provenance: self.provenance,
                domains,
            })
        } else {
            Err(LexiconError::Invalid(issues))
        }
    }
}

fn check_phrases(key: &str, language: Language, phrases: &RawPhrases, issues: &mut Vec<LexiconIssue>) {
    for (name, text) in phrases.fields() {
        let field = format!("{language}.{name}");
        if text.trim().is_empty() {
            issues.push(LexiconIssue::EmptyPhrase {
                key: key.to_string(),
                field,
            });
            continue;
        }
        if let Some(connective) = find_connective(text, language) {
            issues.push(LexiconIssue::ConnectiveContamination {
                key: key.to_string(),
                field,
                connective,
            });
        }
    }
    let pairs = [
        (&phrases.s1, &phrases.v1),
        (&phrases.s2, &phrases.v2),
        (&phrases.s3, &phrases.v3),
    ];
    if pairs[0] == pairs[1] || pairs[0] == pairs[2] || pairs[1] == pairs[2] {
        issues.push(LexiconIssue::RepeatedStep {
            key: key.to_string(),
            language,
        });
    }
}

/// English connectives match on whole words (so "lift" does not trip "if");
/// Chinese connectives match as substrings.
pub(crate) fn find_connective(text: &str, language: Language) -> Option<String> {
    match language {
        Language::En => {
            let words: Vec<String> = text
                .split(|c: char| !c.is_alphanumeric() && c != '\'')
                .filter(|w| !w.is_empty())
                .map(str::to_lowercase)
                .collect();
            EN_CONNECTIVES
                .iter()
                .find(|conn| words.windows(conn.len()).any(|w| w.iter().zip(conn.iter()).all(|(a, b)| a == b)))
                .map(|conn| conn.join(" "))
        }
        Language::Zh => ZH_CONNECTIVES
            .iter()
            .find(|c| text.contains(*c))
            .map(|c| c.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn json_with(mutate: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut value: serde_json::Value = serde_json::from_str(DEFAULT_LEXICON).unwrap();
        mutate(&mut value);
        value.to_string()
    }

    #[test]
    fn bundled_lexicon_has_400_triples() {
        let lex = Lexicon::bundled();
        assert_eq!(lex.domains().len(), 8);
        assert!(lex.domains().values().all(|v| v.len() == 50));
        assert_eq!(lex.len(), 400);
        assert_eq!(lex.get("house-001").unwrap().en.cause().subject, "toaster");
    }

    #[test]
    fn missing_domain_is_named() {
        let text = json_with(|v| {
            v["domains"].as_object_mut().unwrap().remove("healthcare");
        });
        let err = Lexicon::from_json_str(&text, "test").unwrap_err();
        assert!(err.issues().contains(&LexiconIssue::DomainCount {
            found: 7,
            missing: vec![Domain::Healthcare],
        }));
        assert!(err.to_string().contains("healthcare"));
    }

    #[test]
    fn connective_in_verb_cites_key() {
        let text = json_with(|v| {
            v["domains"]["school_life"][3]["en"]["v2"] = "then pauses".into();
        });
        let err = Lexicon::from_json_str(&text, "test").unwrap_err();
        assert_eq!(
            err.issues(),
            &[LexiconIssue::ConnectiveContamination {
                key: "school-004".into(),
                field: "en.v2".into(),
                connective: "then".into(),
            }]
        );
    }

    #[test]
    fn chinese_connective_is_substring_match() {
        assert_eq!(find_connective("然后变热", Language::Zh).as_deref(), Some("然后"));
        assert_eq!(find_connective("变热", Language::Zh), None);
        assert_eq!(find_connective("lifts box", Language::En), None);
        assert_eq!(find_connective("stops due to rain", Language::En).as_deref(), Some("due to"));
    }

    #[test]
    fn duplicate_keys_and_short_domains_are_reported() {
        let text = json_with(|v| {
            v["domains"]["natural_events"][1]["key"] = "nature-001".into();
            v["domains"]["leisure_recreation"].as_array_mut().unwrap().truncate(49);
        });
        let err = Lexicon::from_json_str(&text, "test").unwrap_err();
        let issues = err.issues();
        assert!(issues.iter().any(|i| matches!(i, LexiconIssue::DuplicateKey { key, .. } if key == "nature-001")));
        assert!(issues.contains(&LexiconIssue::TooFewTriples {
            domain: Domain::LeisureRecreation,
            found: 49,
        }));
    }

    #[test]
    fn empty_and_repeated_phrases() {
        let text = json_with(|v| {
            v["domains"]["healthcare"][0]["zh"]["s2"] = "".into();
            let en = &mut v["domains"]["healthcare"][1]["en"];
            en["s3"] = en["s1"].clone();
            en["v3"] = en["v1"].clone();
        });
        let err = Lexicon::from_json_str(&text, "test").unwrap_err();
        assert!(err.issues().contains(&LexiconIssue::EmptyPhrase {
            key: "health-001".into(),
            field: "zh.s2".into(),
        }));
        assert!(err.issues().contains(&LexiconIssue::RepeatedStep {
            key: "health-002".into(),
            language: Language::En,
        }));
    }

    #[test]
    fn parse_error_has_location() {
        let err = Lexicon::from_json_str("{\n \"version\": 1,", "broken.json").unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }), "{err:?}");
    }
}
