//! Shared generators and reference implementations for integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use tarjama_core::{ChunkPolicy, Conversation, Role, Tokenizer};

const LATIN: &[&str] = &["the", "model", "answer", "proof", "x", "value", "graph", "code", "sum"];
const ARABIC: &[&str] = &["النموذج", "الجواب", "برهان", "قيمة", "الرسم", "مجموع", "في", "من"];
const SENTENCE_ENDS: &[&str] = &[".", "?", "!", "؟", "۔"];

/// Random prose of roughly `tokens` builtin tokens with sentence ends,
/// paragraph breaks, digits, punctuation and occasional long unbroken runs.
pub fn random_text<R: Rng>(rng: &mut R, tokens: usize) -> String {
    let mut out = String::new();
    let mut emitted = 0;
    while emitted < tokens {
        match rng.gen_range(0..100) {
            0..=44 => out.push_str(LATIN.choose(rng).unwrap()),
            45..=79 => out.push_str(ARABIC.choose(rng).unwrap()),
            80..=84 => out.push_str(&rng.gen_range(0..10_000).to_string()),
            85..=89 => out.push_str(SENTENCE_ENDS.choose(rng).unwrap()),
            90..=92 => out.push_str("\n\n"),
            93..=94 => out.push(','),
            95..=96 => {
                // Unbroken punctuation run: one token per character, no whitespace.
                let n = rng.gen_range(20..200);
                for _ in 0..n {
                    out.push(*['-', '=', '*', '+'].choose(rng).unwrap());
                }
                emitted += n;
            }
            _ => out.push('\n'),
        }
        emitted += 1;
        if rng.gen_bool(0.8) {
            out.push(' ');
        }
    }
    out
}

/// Arbitrary Unicode, including combining marks, controls, CJK and astral
/// scalars.
pub fn random_unicode<R: Rng>(rng: &mut R, max_chars: usize) -> String {
    let len = rng.gen_range(0..=max_chars);
    (0..len)
        .map(|_| loop {
            let cp = match rng.gen_range(0..6) {
                0 => rng.gen_range(0x20..0x7F),
                1 => rng.gen_range(0x600..0x700),
                2 => *[0x20, 0x0A, 0x09, 0x3000, 0x2028].choose(rng).unwrap(),
                3 => rng.gen_range(0x300..0x370),
                4 => rng.gen_range(0..0x11_0000),
                _ => rng.gen_range(0x4E00..0x9FFF),
            };
            if let Some(c) = char::from_u32(cp) {
                break c;
            }
        })
        .collect()
}

/// Cut points of the chunker computed by enumerating every candidate cut
/// directly on token strings.
pub fn chunk_oracle(text: &str, tokenizer: &Tokenizer, policy: &ChunkPolicy) -> Vec<usize> {
    let spans = tokenizer.tokenize(text);
    let tokens: Vec<&str> = spans.iter().map(|s| &text[s.start..s.end]).collect();
    let n = tokens.len();
    // Does a cut after token i land right after a sentence mark?
    let sentence_after = |i: usize| {
        let tok = tokens[i];
        if tok.chars().any(|c| ".?!\u{061F}\u{06D4}".contains(c)) {
            return true;
        }
        // Second newline of a "\n\n" pair inside this token.
        let prev_last = if i > 0 { tokens[i - 1].chars().last() } else { None };
        let mut prev = prev_last;
        for c in tok.chars() {
            if c == '\n' && prev == Some('\n') {
                return true;
            }
            prev = Some(c);
        }
        false
    };
    let ws_after = |i: usize| tokens[i].chars().any(char::is_whitespace);
    let mut cuts = Vec::new();
    let mut cut = 0;
    while n - cut > policy.target_tokens {
        let target = cut + policy.target_tokens;
        let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
        for k in cut + 1..=n {
            if k < target - policy.window_tokens || k > target + policy.window_tokens {
                continue;
            }
            if k - cut > policy.hard_cap_tokens {
                continue;
            }
            let tier = if sentence_after(k - 1) {
                0
            } else if ws_after(k - 1) {
                1
            } else {
                continue;
            };
            candidates.push((tier, k.abs_diff(target), k));
        }
        candidates.sort();
        let next = candidates.first().map_or(target, |c| c.2);
        cuts.push(next);
        cut = next;
    }
    cuts
}

fn random_sentence<R: Rng>(rng: &mut R, words: usize) -> String {
    let mut s = String::new();
    for i in 0..words {
        if i > 0 {
            s.push(' ');
        }
        let pool = if rng.gen_bool(0.6) { ARABIC } else { LATIN };
        s.push_str(pool.choose(rng).unwrap());
    }
    s.push_str(SENTENCE_ENDS.choose(rng).unwrap());
    s
}

/// A corpus of conversations with think spans, empty messages, system
/// prompts, categories and assistant turns long enough to need several chunks.
pub fn random_corpus<R: Rng>(rng: &mut R, n: usize) -> Vec<Conversation> {
    (0..n)
        .map(|i| {
            let mut messages = Vec::new();
            if rng.gen_bool(0.2) {
                messages.push((Role::System, random_sentence(rng, 6)));
            }
            let turns = rng.gen_range(1..=3);
            for _ in 0..turns {
                let words = rng.gen_range(0..20);
                messages.push((Role::User, random_sentence(rng, words)));
                let mut reply = String::new();
                if rng.gen_bool(0.4) {
                    reply.push_str("<think>");
                    let len = rng.gen_range(0..700);
                    reply.push_str(&random_text(rng, len));
                    reply.push_str("</think>");
                    if rng.gen_bool(0.5) {
                        reply.push_str("\n\n");
                    }
                }
                let long = rng.gen_bool(0.15);
                let len = if long { rng.gen_range(500..1600) } else { rng.gen_range(0..80) };
                reply.push_str(&random_text(rng, len));
                messages.push((Role::Assistant, reply));
            }
            if rng.gen_bool(0.05) {
                messages.push((Role::Tool, String::new()));
            }
            let mut c = Conversation::new(
                format!("conv-{i:05}"),
                ["train", "validation", "test"][i % 3],
                messages,
            );
            if rng.gen_bool(0.7) {
                c.category = Some(["code", "science", "math"][rng.gen_range(0..3)].to_string());
            }
            c
        })
        .collect()
}
