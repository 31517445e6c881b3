//! Payload dictionary used by the `InjectionToken` mutation.

use std::path::Path;

use rand::Rng;

const BUILTIN: &str = include_str!("../assets/injection_tokens.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    tokens: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DictionaryError {
    #[error("line {line}: {reason}")]
    BadEscape { line: usize, reason: String },
    #[error("dictionary has no tokens")]
    Empty,
}

impl Dictionary {
    pub fn builtin() -> Dictionary {
        Self::parse(BUILTIN).expect("built-in dictionary is well-formed")
    }

    /// Parses the one-token-per-line escaped format.
    pub fn parse(text: &str) -> Result<Dictionary, DictionaryError> {
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let token = unescape(line).map_err(|reason| DictionaryError::BadEscape {
                line: i + 1,
                reason,
            })?;
            tokens.push(token);
        }
        if tokens.is_empty() {
            return Err(DictionaryError::Empty);
        }
        Ok(Dictionary { tokens })
    }

    /// Built-in tokens followed by the ones in `path`.
    pub fn extended_from(path: &Path) -> std::io::Result<Dictionary> {
        let text = std::fs::read_to_string(path)?;
        let extra = Self::parse(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let mut d = Self::builtin();
        d.tokens.extend(extra.tokens);
        Ok(d)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.tokens[rng.gen_range(0..self.tokens.len())]
    }
}

/// One token drawn uniformly from the built-in dictionary.
pub fn injection_token<R: Rng + ?Sized>(rng: &mut R) -> String {
    Dictionary::builtin().pick(rng).to_string()
}

fn unescape(line: &str) -> Result<String, String> {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('t') => out.push('\t'),
            Some('0') => out.push('\0'),
            Some('x') => {
                let hex: String = chars.by_ref().take(2).collect();
                let b = u8::from_str_radix(&hex, 16).map_err(|_| format!("bad \\x escape `{hex}`"))?;
                if b > 0x7f {
                    return Err(format!("\\x{hex} is not ASCII; use \\u{{..}}"));
                }
                out.push(b as char);
            }
            Some('u') => {
                if chars.next() != Some('{') {
                    return Err("expected `{` after \\u".into());
                }
                let hex: String = chars.by_ref().take_while(|&c| c != '}').collect();
                let cp = u32::from_str_radix(&hex, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| format!("bad \\u escape `{hex}`"))?;
                out.push(cp);
            }
            other => return Err(format!("unknown escape \\{}", other.unwrap_or(' '))),
        }
    }
    Ok(out)
}
