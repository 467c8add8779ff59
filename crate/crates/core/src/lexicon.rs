//! Rule-based verb–noun extraction over a frozen lexicon.
//!
//! The skill of an instruction is the first verb phrase found in the lexicon;
//! its objects are the head nouns found after longest-match scanning. The
//! lexicon ships with the crate so counts are reproducible across machines.

use std::collections::BTreeSet;
use std::sync::OnceLock;

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.txt");

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Extraction {
    pub skill: Option<String>,
    pub objects: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    skills: Vec<(Vec<String>, String)>,
    objects: Vec<(Vec<String>, String)>,
}

/// Lowercase word tokens; apostrophes are dropped, other punctuation splits.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(['\'', '\u{2019}'], "")
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn plural_forms(word: &str) -> Vec<String> {
    let mut forms = vec![format!("{word}s"), format!("{word}es")];
    if let Some(stem) = word.strip_suffix('y') {
        forms.push(format!("{stem}ies"));
    }
    if let Some(stem) = word.strip_suffix("fe") {
        forms.push(format!("{stem}ves"));
    }
    forms
}

impl Lexicon {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut skills = Vec::new();
        let mut objects = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (kind, rest) = line
                .split_once(' ')
                .ok_or_else(|| format!("line {}: missing entry kind", n + 1))?;
            let (name, phrases) = rest
                .split_once(':')
                .ok_or_else(|| format!("line {}: missing `:`", n + 1))?;
            let name = name.trim().to_string();
            for phrase in phrases.split(',') {
                let tokens = tokenize(phrase);
                if tokens.is_empty() {
                    continue;
                }
                match kind {
                    "skill" => skills.push((tokens, name.clone())),
                    "object" => {
                        let (last, head) = tokens.split_last().unwrap();
                        for form in plural_forms(last) {
                            let mut t = head.to_vec();
                            t.push(form);
                            objects.push((t, name.clone()));
                        }
                        objects.push((tokens, name.clone()));
                    }
                    other => return Err(format!("line {}: unknown kind `{other}`", n + 1)),
                }
            }
        }
        // Longest phrases first so a scan takes the longest match.
        skills.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
        objects.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
        Ok(Lexicon { skills, objects })
    }

    /// The lexicon shipped with the crate.
    pub fn builtin() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::parse(DEFAULT_LEXICON).expect("builtin lexicon parses"))
    }

    fn match_at<'a>(
        table: &'a [(Vec<String>, String)],
        tokens: &[String],
        at: usize,
    ) -> Option<(usize, &'a str)> {
        table.iter().find_map(|(phrase, name)| {
            let end = at + phrase.len();
            (end <= tokens.len() && tokens[at..end] == phrase[..]).then_some((phrase.len(), name.as_str()))
        })
    }

    pub fn extract(&self, instruction: &str) -> Extraction {
        let tokens = tokenize(instruction);
        let skill = (0..tokens.len())
            .find_map(|i| Self::match_at(&self.skills, &tokens, i))
            .map(|(_, name)| name.to_string());

        let mut hits: Vec<(usize, usize, &str)> = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            match Self::match_at(&self.objects, &tokens, i) {
                Some((len, name)) => {
                    hits.push((i, len, name));
                    i += len;
                }
                None => i += 1,
            }
        }
        let mut objects: Vec<String> = Vec::new();
        for (k, &(start, len, name)) in hits.iter().enumerate() {
            // A one-word object directly followed by another is a modifier ("orange pan").
            let modifier = len == 1
                && hits
                    .get(k + 1)
                    .is_some_and(|&(next, _, _)| next == start + len);
            if !modifier && !objects.iter().any(|o| o == name) {
                objects.push(name.to_string());
            }
        }
        Extraction { skill, objects }
    }

    pub fn is_known_object(&self, noun: &str) -> bool {
        let tokens = tokenize(noun);
        self.objects.iter().any(|(p, _)| *p == tokens)
    }

    pub fn skill_names(&self) -> BTreeSet<&str> {
        self.skills.iter().map(|(_, n)| n.as_str()).collect()
    }
}

/// Extraction with the builtin lexicon.
pub fn extract(instruction: &str) -> Extraction {
    Lexicon::builtin().extract(instruction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verb_noun_pairs() {
        let e = extract("pick up banana");
        assert_eq!(e.skill.as_deref(), Some("pick"));
        assert_eq!(e.objects, vec!["banana"]);

        let e = extract("Move the pan to the right of the bottle and banana.");
        assert_eq!(e.skill.as_deref(), Some("move"));
        assert_eq!(e.objects, vec!["pan", "bottle", "banana"]);

        let e = extract("put both the alphabet soup and the cream cheese box in the basket");
        assert_eq!(e.skill.as_deref(), Some("place"));
        assert_eq!(e.objects, vec!["alphabet soup", "cream cheese", "basket"]);

        let e = extract("turn on the stove and put the moka pot on it");
        assert_eq!(e.skill.as_deref(), Some("turn on"));
        assert_eq!(e.objects, vec!["stove", "moka pot"]);
    }

    #[test]
    fn plurals_and_modifiers() {
        let e = extract("stack the cups");
        assert_eq!(e.objects, vec!["cup"]);
        let e = extract("move the orange pan");
        assert_eq!(e.objects, vec!["pan"]);
        let e = extract("go");
        assert_eq!(e, Extraction::default());
    }

    #[test]
    fn builtin_parses() {
        assert!(Lexicon::builtin().skill_names().contains("open"));
        assert!(Lexicon::builtin().is_known_object("towels"));
    }
}
