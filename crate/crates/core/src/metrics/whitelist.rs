//! Removal of spans that are legitimately non-Arabic before script tallying.
//!
//! Spans, scanned left to right with the earliest start winning:
//!
//! - fenced code `` ``` … ``` ``, display math `$$ … $$`, `\[ … \]` and
//!   `\( … \)`; when unterminated these run to the end of the text;
//! - inline code `` ` … ` ``; an unmatched backtick is kept as is;
//! - inline math `$ … $` where the closing `$` comes within 200 characters,
//!   the opening `$` is not followed by whitespace, and the closing one is not
//!   preceded by whitespace nor followed by a digit (so `$5 and $10` stays);
//! - URLs (`scheme://…` or `www.…` up to whitespace) and email addresses.
//!
//! The pass is repeated until nothing changes, so removing a span can never
//! leave a new span behind and stripping is idempotent.

use std::sync::OnceLock;

use regex::Regex;

const INLINE_MATH_MAX_CHARS: usize = 200;

fn link_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(concat!(
            r"[A-Za-z][A-Za-z0-9+.\-]*://\S*",
            r"|www\.\S*",
            r"|[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}",
        ))
        .expect("link pattern")
    })
}

pub fn strip_whitelisted(text: &str) -> String {
    let mut current = strip_once(text);
    loop {
        let next = strip_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn strip_once(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    while pos < text.len() {
        let delimited = next_delimited(text, pos);
        let link = link_regex().find_at(text, pos).map(|m| (m.start(), m.end()));
        let span = match (delimited, link) {
            (Some(d), Some(l)) => Some(if l.0 < d.0 { l } else { d }),
            (d, l) => d.or(l),
        };
        match span {
            Some((start, end)) => {
                out.push_str(&text[pos..start]);
                pos = end;
            }
            None => {
                out.push_str(&text[pos..]);
                break;
            }
        }
    }
    out
}

/// Earliest code or math span starting at or after `from`.
fn next_delimited(text: &str, from: usize) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut i = from;
    while i < bytes.len() {
        if !matches!(bytes[i], b'`' | b'$' | b'\\') {
            i += 1;
            continue;
        }
        let rest = &text[i..];
        let span = match bytes[i] {
            b'`' if rest.starts_with("```") => Some(until(text, i, 3, "```")),
            b'`' => text[i + 1..].find('`').map(|j| (i, i + 1 + j + 1)),
            b'$' if rest.starts_with("$$") => Some(until(text, i, 2, "$$")),
            b'$' => inline_math(text, i),
            b'\\' if rest.starts_with("\\[") => Some(until(text, i, 2, "\\]")),
            b'\\' if rest.starts_with("\\(") => Some(until(text, i, 2, "\\)")),
            _ => None,
        };
        if span.is_some() {
            return span;
        }
        i += 1;
    }
    None
}

/// Span from `start` through the closing delimiter, or to the end of text.
fn until(text: &str, start: usize, open_len: usize, close: &str) -> (usize, usize) {
    let body = start + open_len;
    match text[body..].find(close) {
        Some(j) => (start, body + j + close.len()),
        None => (start, text.len()),
    }
}

fn inline_math(text: &str, start: usize) -> Option<(usize, usize)> {
    let body = &text[start + 1..];
    if body.chars().next().is_none_or(char::is_whitespace) {
        return None;
    }
    let mut prev: Option<char> = None;
    for (n, (j, ch)) in body.char_indices().enumerate() {
        if n > INLINE_MATH_MAX_CHARS {
            return None;
        }
        if ch == '$' && j > 0 {
            let closes = !prev.is_some_and(char::is_whitespace)
                && !body[j + 1..].chars().next().is_some_and(|c| c.is_ascii_digit());
            if closes {
                return Some((start, start + 1 + j + 1));
            }
        }
        prev = Some(ch);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(strip_whitelisted("زر https://a.b الآن"), "زر  الآن");
        assert_eq!(strip_whitelisted("no specials"), "no specials");
        assert_eq!(strip_whitelisted("x `code` y"), "x  y");
    }

    #[test]
    fn each_span_kind() {
        assert_eq!(strip_whitelisted("a www.example.com b"), "a  b");
        assert_eq!(strip_whitelisted("mail me: first.last@mail.example.org!"), "mail me: !");
        assert_eq!(strip_whitelisted("p\n```rust\nfn main() {}\n```\nq"), "p\n\nq");
        assert_eq!(strip_whitelisted("sum $$x^2$$ done"), "sum  done");
        assert_eq!(strip_whitelisted("let $x+1$ be"), "let  be");
        assert_eq!(strip_whitelisted(r"a \(x\) b \[y\] c"), "a  b  c");
    }

    #[test]
    fn unterminated_spans() {
        assert_eq!(strip_whitelisted("keep ```code forever"), "keep ");
        assert_eq!(strip_whitelisted("keep $$x"), "keep ");
        assert_eq!(strip_whitelisted(r"keep \[x"), "keep ");
        assert_eq!(strip_whitelisted("odd ` tick"), "odd ` tick");
    }

    #[test]
    fn currency_is_not_math() {
        assert_eq!(strip_whitelisted("costs $5 and $10"), "costs $5 and $10");
        let far = format!("$a{}$", "b".repeat(250));
        assert_eq!(strip_whitelisted(&far), far);
    }

    #[test]
    fn removal_never_exposes_a_new_span() {
        // Dropping the inline code leaves `www.x`, which the next pass removes.
        assert_eq!(strip_whitelisted("ww`c`w.x end"), " end");
    }

    proptest! {
        #[test]
        fn idempotent(text in "[a-z`$@.:/\\\\()\\[\\] w\\n]{0,60}") {
            let once = strip_whitelisted(&text);
            prop_assert_eq!(strip_whitelisted(&once), once.clone());
        }

        #[test]
        fn idempotent_unicode(text in "\\PC{0,60}") {
            let once = strip_whitelisted(&text);
            prop_assert_eq!(strip_whitelisted(&once), once.clone());
        }
    }
}
