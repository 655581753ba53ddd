//! Window-based negation scoping.

use super::extract::ClinicalTag;
use super::tagger::PosTag;

/// Tokens before a tag that are searched for a negation trigger.
pub const NEGATION_WINDOW: usize = 4;

/// Words that close a negation scope ("no fever but chest pain").
pub const SCOPE_TERMINATORS: &[&str] = &["but", "however", "although", "though", "except", "aside", "besides", "which", "yet"];

/// Mark tags preceded by a NEG trigger within [`NEGATION_WINDOW`] tokens of
/// their first token, unless a scope terminator sits in between.
pub fn detect_negation<S: AsRef<str>>(tags: &mut [ClinicalTag], words: &[S], pos: &[PosTag]) {
    for tag in tags.iter_mut() {
        let Some(&first) = tag.positions.first() else { continue };
        let lo = first.saturating_sub(NEGATION_WINDOW);
        tag.negated = false;
        for j in (lo..first).rev() {
            if SCOPE_TERMINATORS.contains(&words[j].as_ref()) {
                break;
            }
            if pos[j] == PosTag::Neg {
                tag.negated = true;
                break;
            }
        }
    }
}
