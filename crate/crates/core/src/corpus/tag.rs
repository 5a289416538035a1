use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single IOB2 tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn begin(class: impl Into<String>) -> Self {
        Tag::Begin(class.into())
    }

    pub fn inside(class: impl Into<String>) -> Self {
        Tag::Inside(class.into())
    }

    /// Class name, or `None` for `O`.
    pub fn class(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(c) | Tag::Inside(c) => Some(c),
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, Tag::Outside)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(c) => write!(f, "B-{c}"),
            Tag::Inside(c) => write!(f, "I-{c}"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let bad = || Error::InvalidTag(s.to_string());
        let (prefix, class) = s.split_once('-').ok_or_else(bad)?;
        if class.is_empty() || class.chars().any(char::is_whitespace) {
            return Err(bad());
        }
        match prefix {
            "B" => Ok(Tag::Begin(class.to_string())),
            "I" => Ok(Tag::Inside(class.to_string())),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Tag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Tag> for String {
    fn from(t: Tag) -> String {
        t.to_string()
    }
}

/// Parse a slice of tag strings.
pub fn parse_tags<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Tag>> {
    tags.iter().map(|t| t.as_ref().parse()).collect()
}

/// Rewrites every `I-c` that lacks a same-class predecessor into `B-c`.
///
/// The result is always valid IOB2 and the operation is idempotent.
pub fn repair_labels(labels: &[Tag]) -> Vec<Tag> {
    let mut out: Vec<Tag> = Vec::with_capacity(labels.len());
    for tag in labels {
        let fixed = match tag {
            Tag::Inside(c) => {
                let continues = out.last().and_then(Tag::class) == Some(c.as_str());
                if continues {
                    tag.clone()
                } else {
                    Tag::Begin(c.clone())
                }
            }
            _ => tag.clone(),
        };
        out.push(fixed);
    }
    out
}

/// Checks IOB2 validity, reporting the first offending position.
pub fn validate_iob2(labels: &[Tag]) -> Result<()> {
    let mut prev: Option<&str> = None;
    for (position, tag) in labels.iter().enumerate() {
        if let Tag::Inside(c) = tag {
            if prev != Some(c.as_str()) {
                return Err(Error::InvalidIob2 {
                    position,
                    tag: tag.to_string(),
                });
            }
        }
        prev = tag.class();
    }
    Ok(())
}

/// Ordered label inventory used by the token classifier.
///
/// Index 0 is always `O`; each class contributes `B-c` then `I-c`, classes sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    tags: Vec<Tag>,
}

impl TagSet {
    pub fn from_classes<I, S>(classes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        classes.sort();
        classes.dedup();
        let mut tags = vec![Tag::Outside];
        for c in classes {
            tags.push(Tag::Begin(c.clone()));
            tags.push(Tag::Inside(c));
        }
        TagSet { tags }
    }

    /// Tag set in an explicit order. Used when the classifier's order is fixed externally.
    pub fn from_tags(tags: Vec<Tag>) -> Result<Self> {
        if tags.len() < 2 {
            return Err(Error::InvalidInput("a tag set needs at least two tags".into()));
        }
        for (i, t) in tags.iter().enumerate() {
            if tags[..i].contains(t) {
                return Err(Error::InvalidInput(format!("duplicate tag {t}")));
            }
        }
        Ok(TagSet { tags })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn get(&self, index: usize) -> Option<&Tag> {
        self.tags.get(index)
    }

    pub fn index_of(&self, tag: &Tag) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    pub fn classes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.tags.iter().filter_map(Tag::class).collect();
        out.dedup();
        out
    }

    pub fn contains_class(&self, class: &str) -> bool {
        self.tags.contains(&Tag::Begin(class.to_string()))
            && self.tags.contains(&Tag::Inside(class.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(s: &[&str]) -> Vec<Tag> {
        parse_tags(s).unwrap()
    }

    #[test]
    fn parses_and_displays() {
        for s in ["O", "B-idiom", "I-idiom", "B-x-y"] {
            assert_eq!(s.parse::<Tag>().unwrap().to_string(), s);
        }
        for bad in ["", "B", "B-", "X-idiom", "o", "I-a b"] {
            assert!(bad.parse::<Tag>().is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn repairs_stray_inside() {
        assert_eq!(
            repair_labels(&tags(&["O", "I-idiom", "I-idiom"])),
            tags(&["O", "B-idiom", "I-idiom"])
        );
        assert_eq!(repair_labels(&tags(&["I-idiom"])), tags(&["B-idiom"]));
        let valid = tags(&["B-idiom", "I-idiom", "O"]);
        assert_eq!(repair_labels(&valid), valid);
        // class switch mid-run
        assert_eq!(
            repair_labels(&tags(&["B-a", "I-b"])),
            tags(&["B-a", "B-b"])
        );
    }

    #[test]
    fn validate_reports_position() {
        let err = validate_iob2(&tags(&["O", "O", "I-idiom"])).unwrap_err();
        assert!(matches!(err, Error::InvalidIob2 { position: 2, .. }));
        validate_iob2(&tags(&["B-idiom", "I-idiom"])).unwrap();
    }

    #[test]
    fn tag_set_layout() {
        let ts = TagSet::from_classes(["metaphor", "idiom", "idiom"]);
        let names: Vec<String> = ts.tags().iter().map(ToString::to_string).collect();
        assert_eq!(names, ["O", "B-idiom", "I-idiom", "B-metaphor", "I-metaphor"]);
        assert_eq!(ts.classes(), ["idiom", "metaphor"]);
        assert!(ts.contains_class("idiom"));
        assert!(!ts.contains_class("simile"));
    }

    proptest::proptest! {
        #[test]
        fn repair_is_idempotent_and_valid(raw in proptest::collection::vec(0u8..5, 0..20)) {
            let seq: Vec<Tag> = raw.iter().map(|r| match r {
                0 => Tag::Outside,
                1 => Tag::begin("a"),
                2 => Tag::inside("a"),
                3 => Tag::begin("b"),
                _ => Tag::inside("b"),
            }).collect();
            let once = repair_labels(&seq);
            proptest::prop_assert!(validate_iob2(&once).is_ok());
            proptest::prop_assert_eq!(repair_labels(&once), once);
        }
    }
}
