//! Per-character script classes for Script Purity.

use icu_properties::props::GeneralCategory;
use icu_properties::CodePointMapData;
use serde::{Deserialize, Serialize};
use unicode_script::{Script, UnicodeScript};

/// Unicode version of the property data behind [`classify_char`].
pub const UNICODE_VERSION: (u64, u64, u64) = unicode_script::UNICODE_VERSION;

pub fn unicode_version_string() -> String {
    let (a, b, c) = UNICODE_VERSION;
    format!("{a}.{b}.{c}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharClass {
    Arabic,
    OtherLetter,
    AsciiDigit,
    Ignore,
}

fn general_category(ch: char) -> GeneralCategory {
    CodePointMapData::<GeneralCategory>::new().get(ch)
}

pub fn is_combining_mark(ch: char) -> bool {
    matches!(
        general_category(ch),
        GeneralCategory::NonspacingMark | GeneralCategory::SpacingMark | GeneralCategory::EnclosingMark
    )
}

fn is_letter(gc: GeneralCategory) -> bool {
    matches!(
        gc,
        GeneralCategory::UppercaseLetter
            | GeneralCategory::LowercaseLetter
            | GeneralCategory::TitlecaseLetter
            | GeneralCategory::ModifierLetter
            | GeneralCategory::OtherLetter
    )
}

fn is_arabic_indic_digit(ch: char) -> bool {
    matches!(ch, '\u{0660}'..='\u{0669}' | '\u{06F0}'..='\u{06F9}')
}

/// Classifies one character.
///
/// - ASCII `0-9` are [`CharClass::AsciiDigit`].
/// - Combining marks (general category `M`) take `prev_base`, the class of
///   the nearest preceding non-mark character, or are ignored at the start.
/// - Arabic-Indic and Extended Arabic-Indic digits are Arabic.
/// - Letters are Arabic when their Script_Extensions include Arabic (this
///   covers the presentation-form blocks and tatweel), otherwise
///   [`CharClass::OtherLetter`].
/// - Everything else (punctuation, symbols, whitespace, other digits) is
///   ignored.
pub fn classify_char(ch: char, prev_base: Option<CharClass>) -> CharClass {
    if ch.is_ascii_digit() {
        return CharClass::AsciiDigit;
    }
    let gc = general_category(ch);
    if matches!(
        gc,
        GeneralCategory::NonspacingMark | GeneralCategory::SpacingMark | GeneralCategory::EnclosingMark
    ) {
        return prev_base.unwrap_or(CharClass::Ignore);
    }
    if is_arabic_indic_digit(ch) {
        return CharClass::Arabic;
    }
    if is_letter(gc) {
        // Common and Inherited extensions report every script as a member.
        let ext = ch.script_extension();
        if !ext.is_common() && !ext.is_inherited() && ext.contains_script(Script::Arabic) {
            CharClass::Arabic
        } else {
            CharClass::OtherLetter
        }
    } else {
        CharClass::Ignore
    }
}

/// Counts of Arabic-script letters/digits, other letters and ASCII digits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptTally {
    pub arabic: usize,
    pub other_letters: usize,
    pub ascii_digits: usize,
}

impl ScriptTally {
    pub fn of(text: &str) -> Self {
        let mut tally = Self::default();
        let mut prev_base = None;
        for ch in text.chars() {
            let class = classify_char(ch, prev_base);
            if !is_combining_mark(ch) {
                prev_base = Some(class);
            }
            match class {
                CharClass::Arabic => tally.arabic += 1,
                CharClass::OtherLetter => tally.other_letters += 1,
                CharClass::AsciiDigit => tally.ascii_digits += 1,
                CharClass::Ignore => {}
            }
        }
        tally
    }

    /// `A / (A + L + D)`, or 1 when nothing was counted.
    pub fn arabic_ratio(&self) -> f64 {
        let total = self.arabic + self.other_letters + self.ascii_digits;
        if total == 0 {
            1.0
        } else {
            self.arabic as f64 / total as f64
        }
    }
}
