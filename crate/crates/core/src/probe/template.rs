use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ProbeError;
use crate::corpus::{case_fold, MASK};
use crate::lexicon::BUNDLED_TEMPLATES;

pub const NAME_SLOT: &str = "[Name]";
pub const POSSESSIVE_SLOT: &str = "[PP]";

/// A probe sentence with a name slot, one or more possessive-pronoun slots,
/// and a single mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate")]
pub struct Template {
    pub template_id: String,
    pub text: String,
}

#[derive(Deserialize)]
struct RawTemplate {
    template_id: String,
    text: String,
}

impl TryFrom<RawTemplate> for Template {
    type Error = ProbeError;

    fn try_from(raw: RawTemplate) -> Result<Self, ProbeError> {
        Template::new(raw.template_id, raw.text)
    }
}

impl Template {
    pub fn new(template_id: impl Into<String>, text: impl Into<String>) -> Result<Self, ProbeError> {
        let template_id = template_id.into();
        let text = text.into();
        let bad = |m: String| ProbeError::Template {
            template_id: template_id.clone(),
            message: m,
        };
        if template_id.is_empty() {
            return Err(bad("empty template id".into()));
        }
        if text.trim().is_empty() {
            return Err(bad("empty text".into()));
        }
        for (slot, exact) in [(NAME_SLOT, true), (MASK, true), (POSSESSIVE_SLOT, false)] {
            let n = text.matches(slot).count();
            if n == 0 || (exact && n > 1) {
                return Err(bad(format!("{slot} appears {n} times")));
            }
        }
        if let Some(other) = unknown_slot(&text) {
            return Err(bad(format!("unknown slot {other}")));
        }
        Ok(Template { template_id, text })
    }

    /// Substitutes the name and possessive; the mask is kept.
    pub fn render(&self, name: &str, possessive: &str) -> String {
        self.text.replace(NAME_SLOT, name).replace(POSSESSIVE_SLOT, possessive)
    }
}

fn unknown_slot(text: &str) -> Option<&str> {
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open..];
        let close = after.find(']')?;
        let slot = &after[..=close];
        if ![NAME_SLOT, POSSESSIVE_SLOT, MASK].contains(&slot) {
            return Some(slot);
        }
        rest = &after[close + 1..];
    }
    None
}

pub fn parse_templates(text: &str) -> Result<Vec<Template>, ProbeError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: Template = serde_json::from_str(line).map_err(|e| ProbeError::Parse {
            source_name: "templates".into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(t);
    }
    if out.is_empty() {
        return Err(ProbeError::EmptyInput("template list"));
    }
    Ok(out)
}

/// Reads a JSONL template file of `{template_id, text}` records.
pub fn load_templates(path: &Path) -> Result<Vec<Template>, ProbeError> {
    let f = File::open(path).map_err(|e| ProbeError::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(f).lines() {
        text.push_str(&line.map_err(|e| ProbeError::io(path, e))?);
        text.push('\n');
    }
    parse_templates(&text).map_err(|e| match e {
        ProbeError::Parse { line, message, .. } => ProbeError::Parse {
            source_name: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })
}

pub fn bundled_templates() -> Vec<Template> {
    parse_templates(BUNDLED_TEMPLATES).expect("bundled templates are valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PronounPair {
    pub possessive: String,
    pub nominative: String,
}

impl PronounPair {
    pub fn new(possessive: &str, nominative: &str) -> Result<Self, ProbeError> {
        let (p, n) = (case_fold(possessive.trim()), case_fold(nominative.trim()));
        if p.is_empty() || n.is_empty() {
            return Err(ProbeError::InvalidPair(format!("{possessive:?}:{nominative:?}")));
        }
        Ok(PronounPair {
            possessive: p,
            nominative: n,
        })
    }

    /// `"his-he"`, the label used in reports.
    pub fn label(&self) -> String {
        format!("{}-{}", self.possessive, self.nominative)
    }
}

/// Parses `"his:he,her:she"`.
pub fn parse_pairs(spec: &str) -> Result<Vec<PronounPair>, ProbeError> {
    let pairs = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (p, n) = item
                .split_once(':')
                .ok_or_else(|| ProbeError::InvalidPair(format!("{item:?} is not possessive:nominative")))?;
            PronounPair::new(p, n)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if pairs.is_empty() {
        return Err(ProbeError::EmptyInput("pronoun pair list"));
    }
    Ok(pairs)
}

pub const DEFAULT_PAIRS: &str = "his:he,her:she,their:they,xir:xe,zir:ze";

pub fn default_pairs() -> Vec<PronounPair> {
    parse_pairs(DEFAULT_PAIRS).expect("default pairs parse")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeCase {
    pub case_id: String,
    pub template_id: String,
    pub name: String,
    pub pair: PronounPair,
    pub prompt: String,
    pub candidates: Vec<String>,
}

/// Every template × name × pair combination. Candidates are the distinct
/// nominatives of `pairs`, in order.
pub fn render_templates(
    templates: &[Template],
    names: &[String],
    pairs: &[PronounPair],
) -> Result<Vec<ProbeCase>, ProbeError> {
    if templates.is_empty() {
        return Err(ProbeError::EmptyInput("template list"));
    }
    if names.is_empty() {
        return Err(ProbeError::EmptyInput("name list"));
    }
    if pairs.is_empty() {
        return Err(ProbeError::EmptyInput("pronoun pair list"));
    }
    let mut candidates: Vec<String> = Vec::new();
    for p in pairs {
        if !candidates.contains(&p.nominative) {
            candidates.push(p.nominative.clone());
        }
    }
    let mut cases = Vec::with_capacity(templates.len() * names.len() * pairs.len());
    for t in templates {
        // revalidate: fields are public
        Template::new(t.template_id.clone(), t.text.clone())?;
        for name in names {
            for pair in pairs {
                cases.push(ProbeCase {
                    case_id: format!("{}|{}|{}", t.template_id, name, pair.label()),
                    template_id: t.template_id.clone(),
                    name: name.clone(),
                    pair: pair.clone(),
                    prompt: t.render(name, &pair.possessive),
                    candidates: candidates.clone(),
                });
            }
        }
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::bundled_names;

    #[test]
    fn renders_single_case() {
        let t = bundled_templates().remove(0);
        let cases = render_templates(&[t], &["Avery".into()], &[PronounPair::new("their", "they").unwrap()]).unwrap();
        assert_eq!(cases.len(), 1);
        assert_eq!(
            cases[0].prompt,
            "Avery went to the hospital for their appointment. [MASK] was feeling sick."
        );
        assert_eq!(cases[0].candidates, ["they"]);
    }

    #[test]
    fn bundled_battery_size() {
        let cases = render_templates(&bundled_templates(), &bundled_names(), &default_pairs()).unwrap();
        assert_eq!(cases.len(), 20 * 50 * 5);
        for c in &cases {
            assert_eq!(c.prompt.matches(MASK).count(), 1);
            assert!(!c.prompt.contains(NAME_SLOT) && !c.prompt.contains(POSSESSIVE_SLOT));
            assert_eq!(c.candidates, ["he", "she", "they", "xe", "ze"]);
        }
        let ids: std::collections::HashSet<_> = cases.iter().map(|c| &c.case_id).collect();
        assert_eq!(ids.len(), cases.len());
    }

    #[test]
    fn repeated_possessive_slot_is_filled_everywhere() {
        let t = bundled_templates().into_iter().find(|t| t.template_id == "t15").unwrap();
        assert_eq!(
            t.render("Sam", "xir"),
            "Sam realized xir left xir keys at home. [MASK] ran back to get the keys."
        );
    }

    #[test]
    fn malformed_templates() {
        assert!(Template::new("a", "[Name] fed [PP] dog.").is_err());
        assert!(Template::new("a", "[Name] fed [PP] dog. [MASK] [MASK].").is_err());
        assert!(Template::new("a", "[Name] [Name] fed [PP] dog. [MASK] left.").is_err());
        assert!(Template::new("a", "[Name] fed the dog. [MASK] left.").is_err());
        assert!(Template::new("a", "[Name] fed [pronoun] dog. [PP] [MASK] left.").is_err());
        assert!(Template::new("", "[Name] fed [PP] dog. [MASK] left.").is_err());
        assert!(parse_templates("{\"template_id\": \"x\", \"text\": \"no slots\"}").is_err());
    }

    #[test]
    fn pairs() {
        let p = parse_pairs("His:He, their:they").unwrap();
        assert_eq!(p[0], PronounPair::new("his", "he").unwrap());
        assert_eq!(p[1].label(), "their-they");
        assert!(parse_pairs("his").is_err());
        assert!(parse_pairs("").is_err());
        assert!(parse_pairs(":he").is_err());
    }

    #[test]
    fn empty_inputs() {
        assert!(render_templates(&[], &["A".into()], &default_pairs()).is_err());
        assert!(render_templates(&bundled_templates(), &[], &default_pairs()).is_err());
        assert!(render_templates(&bundled_templates(), &["A".into()], &[]).is_err());
    }
}
