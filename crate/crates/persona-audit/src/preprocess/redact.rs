//! Identity redaction: replacing demographic markers repeated from the
//! prompt with a neutral token so downstream lexical measures cannot simply
//! read the prompt back.

use std::collections::BTreeSet;

use crate::error::Result;
use crate::matrix::{
    render_persona_prompt, MatrixData, Mode, PersonaSpec, Slot, TaskKind, TaskSpec,
};

/// The replacement token.
pub const IDENTITY_MARKER: &str = "[identity]";

/// Surface forms to redact for one persona: explicit descriptors, structured
/// labels, titles, names, the pronoun paradigm (when the prompt used
/// pronouns), and the individual members of any descriptor list the prompt
/// spelled out.
#[derive(Debug, Clone, PartialEq)]
pub struct RedactionLexicon {
    /// Forms sorted longest-first (so "herself" wins over "her"), deduped.
    forms: Vec<Form>,
}

#[derive(Debug, Clone, PartialEq)]
struct Form {
    /// Original surface form (for export/debugging).
    surface: String,
    /// Lowercased characters to match against.
    lower: Vec<char>,
    /// Word boundary required before/after the match. Not required when the
    /// form itself starts/ends with a non-alphanumeric character (e.g. the
    /// trailing period of "Ms.").
    boundary_start: bool,
    boundary_end: bool,
}

impl RedactionLexicon {
    /// Builds a lexicon from arbitrary surface forms.
    pub fn from_forms<I, S>(forms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let unique: BTreeSet<String> = forms
            .into_iter()
            .map(Into::into)
            .filter(|s| !s.trim().is_empty())
            .collect();
        let mut forms: Vec<Form> = unique
            .into_iter()
            .map(|surface| {
                let lower: Vec<char> = surface.chars().flat_map(char::to_lowercase).collect();
                let boundary_start = lower.first().is_some_and(|c| c.is_alphanumeric());
                let boundary_end = lower.last().is_some_and(|c| c.is_alphanumeric());
                Form {
                    surface,
                    lower,
                    boundary_start,
                    boundary_end,
                }
            })
            .collect();
        // Longest first; the BTreeSet already fixed a deterministic order
        // among equals.
        forms.sort_by(|a, b| b.lower.len().cmp(&a.lower.len()));
        RedactionLexicon { forms }
    }

    /// Derives the lexicon from a persona's prompt substitutions. Every
    /// substring substituted into the persona segment of the prompt is
    /// covered:
    ///
    /// * single-valued slots contribute their value verbatim;
    /// * any pronoun slot pulls in the persona's whole paradigm
    ///   (subject/reflexive/possessive plus the object form, which templates
    ///   never contain but responses echo);
    /// * list placeholders contribute each individual member rather than the
    ///   joined list text.
    ///
    /// First-person "I/me/my" is never part of the lexicon. Applies to
    /// open-ended tasks; the survey task has no free text to redact.
    pub fn for_persona(
        persona: &PersonaSpec,
        task: TaskKind,
        data: &MatrixData,
    ) -> Result<RedactionLexicon> {
        let rendered = render_persona_prompt(persona, &TaskSpec::open(task)?, data)?;
        let gender = data.gender(&persona.group.gender)?;
        let mode = task.mode();
        debug_assert_eq!(mode, Mode::Open);
        let mut forms: BTreeSet<String> = BTreeSet::new();
        for (slot, value) in rendered.substitutions {
            match slot {
                Slot::P1 | Slot::P2 | Slot::P3 => {
                    forms.insert(gender.p1.clone());
                    forms.insert(gender.p2.clone());
                    forms.insert(gender.p3.clone());
                    forms.insert(gender.object_pronoun.clone());
                }
                Slot::RList1 | Slot::RList2 => {
                    for race in data.races() {
                        forms.insert(race.label.clone());
                    }
                }
                Slot::GList1 => {
                    for g in data.genders() {
                        forms.insert(g.g1.clone());
                    }
                }
                Slot::GList2 => {
                    for g in data.genders() {
                        forms.insert(g.g2.clone());
                    }
                }
                _ => {
                    forms.insert(value);
                }
            }
        }
        Ok(RedactionLexicon::from_forms(forms))
    }

    /// The surface forms, longest first.
    pub fn surface_forms(&self) -> Vec<&str> {
        self.forms.iter().map(|f| f.surface.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    /// Finds the first surviving lexicon hit in `text` (case-insensitive,
    /// word-boundary), if any. Used to verify the zero-survivor property.
    pub fn find_hit<'a>(&'a self, text: &str) -> Option<&'a str> {
        let chars: Vec<char> = text.chars().collect();
        for i in 0..chars.len() {
            if let Some((form, _)) = self.match_at(&chars, i) {
                return Some(form.surface.as_str());
            }
        }
        None
    }

    /// Tries every form (longest first) at char position `i`; returns the
    /// matching form and the number of source chars consumed.
    fn match_at<'a>(&'a self, chars: &[char], i: usize) -> Option<(&'a Form, usize)> {
        for form in &self.forms {
            if form.boundary_start && i > 0 && chars[i - 1].is_alphanumeric() {
                continue;
            }
            if let Some(consumed) = match_form(chars, i, &form.lower) {
                let end = i + consumed;
                if form.boundary_end && end < chars.len() && chars[end].is_alphanumeric() {
                    continue;
                }
                return Some((form, consumed));
            }
        }
        None
    }
}

/// Case-insensitive match of `form_lower` against `chars[i..]`. Each source
/// character's full lowercase expansion must be consumed in order. Returns
/// the number of source chars matched.
fn match_form(chars: &[char], i: usize, form_lower: &[char]) -> Option<usize> {
    let mut fi = 0;
    let mut ti = i;
    while fi < form_lower.len() {
        if ti >= chars.len() {
            return None;
        }
        for lc in chars[ti].to_lowercase() {
            if fi < form_lower.len() && form_lower[fi] == lc {
                fi += 1;
            } else {
                return None;
            }
        }
        ti += 1;
    }
    Some(ti - i)
}

/// Replaces every lexicon hit in `text` with [`IDENTITY_MARKER`] and
/// collapses consecutive markers (separated only by whitespace and/or
/// punctuation) into one. Idempotent.
pub fn redact_identity(text: &str, lexicon: &RedactionLexicon) -> String {
    if lexicon.is_empty() {
        return text.to_string();
    }
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        if let Some((_, consumed)) = lexicon.match_at(&chars, i) {
            out.push_str(IDENTITY_MARKER);
            i += consumed;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    collapse_markers(&out)
}

fn is_separator(c: char) -> bool {
    // '[' is excluded so the scan can recognize a following marker.
    c.is_whitespace() || (c.is_ascii_punctuation() && c != '[') || is_extra_punct(c)
}

fn is_extra_punct(c: char) -> bool {
    matches!(
        c,
        '¿' | '¡' | '«' | '»' | '—' | '–' | '…' | '‘' | '’' | '“' | '”' | '·'
    )
}

fn collapse_markers(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find(IDENTITY_MARKER) {
        out.push_str(&rest[..pos]);
        out.push_str(IDENTITY_MARKER);
        rest = &rest[pos + IDENTITY_MARKER.len()..];
        loop {
            let trimmed = rest.trim_start_matches(is_separator);
            if let Some(after) = trimmed.strip_prefix(IDENTITY_MARKER) {
                rest = after;
            } else {
                break;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{DemographicPriming, Group, Phrasing, PromptType, RoleAdoption};

    fn lexicon(forms: &[&str]) -> RedactionLexicon {
        RedactionLexicon::from_forms(forms.iter().copied().map(str::to_string))
    }

    #[test]
    fn title_and_name_collapse_to_one_marker() {
        let lex = lexicon(&["Ms.", "Garcia"]);
        assert_eq!(
            redact_identity("I am Ms. Garcia, a teacher from Texas.", &lex),
            "I am [identity], a teacher from Texas."
        );
    }

    #[test]
    fn adjacent_descriptors_collapse() {
        let lex = lexicon(&["Hispanic", "woman"]);
        assert_eq!(
            redact_identity("I am a Hispanic woman and proud.", &lex),
            "I am a [identity] and proud."
        );
    }

    #[test]
    fn no_hits_means_unchanged() {
        let lex = lexicon(&["Hispanic", "woman"]);
        let text = "I enjoy long walks and good coffee.";
        assert_eq!(redact_identity(text, &lex), text);
    }

    #[test]
    fn matching_is_case_insensitive_and_word_bounded() {
        let lex = lexicon(&["her", "she"]);
        assert_eq!(
            redact_identity("She said her brother was there.", &lex),
            "[identity] said [identity] brother was there."
        );
        // No hit inside larger words.
        assert_eq!(
            redact_identity("The shepherd gathered the herd.", &lex),
            "The shepherd gathered the herd."
        );
    }

    #[test]
    fn longest_form_wins() {
        let lex = lexicon(&["her", "herself"]);
        assert_eq!(
            redact_identity("She kept it to herself.", &lex),
            "She kept it to [identity]."
        );
    }

    #[test]
    fn redaction_is_idempotent() {
        let lex = lexicon(&["Ms.", "Garcia", "Hispanic", "woman", "she", "her"]);
        let text = "I am Ms. Garcia. As a Hispanic woman, she knows her worth.";
        let once = redact_identity(text, &lex);
        let twice = redact_identity(&once, &lex);
        assert_eq!(once, twice);
        assert!(lex.find_hit(&once).is_none());
    }

    #[test]
    fn persona_lexicon_covers_prompt_substitutions() {
        let data = MatrixData::bundled();
        let persona = PersonaSpec {
            group: Group::new("hispanic", "female"),
            prompt_type: PromptType::new(RoleAdoption::Direct, DemographicPriming::Explicit),
            phrasing: Phrasing::V1,
            name: None,
        };
        let lex =
            RedactionLexicon::for_persona(&persona, TaskKind::SelfDescription, data).unwrap();
        let forms = lex.surface_forms();
        assert!(forms.contains(&"Hispanic"));
        assert!(forms.contains(&"woman"));
        // Direct/explicit prompts carry no pronouns, so none are redacted...
        assert!(!forms.contains(&"she"));
        // ...and first-person words never are.
        assert!(!forms.contains(&"I"));
        assert!(!forms.contains(&"my"));
    }

    #[test]
    fn pronoun_slot_pulls_in_the_whole_paradigm() {
        let data = MatrixData::bundled();
        let persona = PersonaSpec {
            group: Group::new("black", "female"),
            prompt_type: PromptType::new(RoleAdoption::ThirdPerson, DemographicPriming::Explicit),
            phrasing: Phrasing::V1,
            name: None,
        };
        // Third-person self-description substitutes [P1]/[P2].
        let lex =
            RedactionLexicon::for_persona(&persona, TaskKind::SelfDescription, data).unwrap();
        let forms = lex.surface_forms();
        for expected in ["she", "herself", "her", "Black", "woman"] {
            assert!(forms.contains(&expected), "missing {expected}: {forms:?}");
        }
    }

    #[test]
    fn interview_lists_contribute_individual_members() {
        let data = MatrixData::bundled();
        let persona = PersonaSpec {
            group: Group::new("asian", "nonbinary"),
            prompt_type: PromptType::new(RoleAdoption::Interview, DemographicPriming::Explicit),
            phrasing: Phrasing::V1,
            name: None,
        };
        let lex =
            RedactionLexicon::for_persona(&persona, TaskKind::SelfDescription, data).unwrap();
        let forms = lex.surface_forms();
        for expected in [
            "White",
            "Black",
            "Asian",
            "Middle-Eastern",
            "Hispanic",
            "man",
            "woman",
            "nonbinary person",
        ] {
            assert!(forms.contains(&expected), "missing {expected}");
        }
        // The joined list text itself is not a form.
        assert!(!forms
            .iter()
            .any(|f| f.contains("White, Black")));
    }

    #[test]
    fn multiword_and_accented_forms_match() {
        let lex = lexicon(&["nonbinary person", "Yılmaz"]);
        assert_eq!(
            redact_identity("They are a Nonbinary Person named YILMAZ.", &lex),
            // 'I' lowercases to 'i', which does not match the dotless 'ı';
            // the uppercase form from the table is what models echo.
            "They are a [identity] named YILMAZ.".to_string()
        );
        assert_eq!(
            redact_identity("Mx. Yılmaz writes poetry.", &lex),
            "Mx. [identity] writes poetry."
        );
    }

    #[test]
    fn markers_separated_by_punctuation_collapse() {
        let lex = lexicon(&["Hispanic", "woman", "Garcia"]);
        assert_eq!(
            redact_identity("Hispanic, woman, Garcia — that is me.", &lex),
            "[identity] — that is me."
        );
    }
}
