//! Minimal SMILES tokenizer and normalizer.
//!
//! This is deliberately tokenizer-level: no aromaticity perception, valence
//! checking, or canonical ordering. The engine needs stable strings and token
//! shingles, not chemistry-complete parsing. Concatenating the emitted token
//! texts always reproduces the input.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SmilesErrorKind {
    #[error("unbalanced opening parenthesis")]
    UnbalancedOpenParen,
    #[error("unbalanced closing parenthesis")]
    UnbalancedCloseParen,
    #[error("unclosed bracket atom")]
    UnclosedBracket,
    #[error("empty bracket atom")]
    EmptyBracket,
    #[error("ring closure after '%' needs two digits")]
    BadRingClosure,
    #[error("unexpected character")]
    UnexpectedChar,
    #[error("input is not ASCII")]
    NonAscii,
}

/// A tokenizer failure with the byte position it occurred at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{kind} at position {position}")]
pub struct SmilesError {
    pub position: usize,
    pub kind: SmilesErrorKind,
}

impl SmilesError {
    fn new(position: usize, kind: SmilesErrorKind) -> Self {
        Self { position, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Atom,
    BracketAtom,
    Bond,
    RingClosure,
    BranchOpen,
    BranchClose,
    Dot,
}

/// One lexical token. `atom_map` is populated only for bracket atoms carrying
/// a `:n` suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub atom_map: Option<u32>,
}

impl Token {
    fn simple(kind: TokenKind, text: impl Into<String>) -> Self {
        Self {
            kind,
            text: text.into(),
            atom_map: None,
        }
    }
}

const BOND_CHARS: &[u8] = b"-=#$:/\\~";

/// Tokenize a molecule SMILES string.
///
/// Two-letter halogens (`Cl`, `Br`) become single atom tokens, bracket atoms
/// become single tokens with their atom map extracted, and parenthesis balance
/// is checked (errors point at the offending byte).
pub fn tokenize(input: &str) -> Result<Vec<Token>, SmilesError> {
    if !input.is_ascii() {
        let position = input
            .as_bytes()
            .iter()
            .position(|b| !b.is_ascii())
            .unwrap_or(0);
        return Err(SmilesError::new(position, SmilesErrorKind::NonAscii));
    }
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut open_parens: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'[' => {
                let start = i;
                let mut j = i + 1;
                while j < bytes.len() && bytes[j] != b']' {
                    j += 1;
                }
                if j >= bytes.len() {
                    return Err(SmilesError::new(start, SmilesErrorKind::UnclosedBracket));
                }
                if j == start + 1 {
                    return Err(SmilesError::new(start, SmilesErrorKind::EmptyBracket));
                }
                let text = &input[start..=j];
                tokens.push(Token {
                    kind: TokenKind::BracketAtom,
                    text: text.to_string(),
                    atom_map: bracket_atom_map(text),
                });
                i = j + 1;
            }
            b'(' => {
                open_parens.push(i);
                tokens.push(Token::simple(TokenKind::BranchOpen, "("));
                i += 1;
            }
            b')' => {
                if open_parens.pop().is_none() {
                    return Err(SmilesError::new(i, SmilesErrorKind::UnbalancedCloseParen));
                }
                tokens.push(Token::simple(TokenKind::BranchClose, ")"));
                i += 1;
            }
            b'.' => {
                tokens.push(Token::simple(TokenKind::Dot, "."));
                i += 1;
            }
            b'%' => {
                if i + 2 < bytes.len()
                    && bytes[i + 1].is_ascii_digit()
                    && bytes[i + 2].is_ascii_digit()
                {
                    tokens.push(Token::simple(TokenKind::RingClosure, &input[i..i + 3]));
                    i += 3;
                } else {
                    return Err(SmilesError::new(i, SmilesErrorKind::BadRingClosure));
                }
            }
            b'0'..=b'9' => {
                tokens.push(Token::simple(TokenKind::RingClosure, &input[i..i + 1]));
                i += 1;
            }
            _ if BOND_CHARS.contains(&b) => {
                tokens.push(Token::simple(TokenKind::Bond, &input[i..i + 1]));
                i += 1;
            }
            b'C' if bytes.get(i + 1) == Some(&b'l') => {
                tokens.push(Token::simple(TokenKind::Atom, "Cl"));
                i += 2;
            }
            b'B' if bytes.get(i + 1) == Some(&b'r') => {
                tokens.push(Token::simple(TokenKind::Atom, "Br"));
                i += 2;
            }
            _ if b.is_ascii_alphabetic() || b == b'*' => {
                tokens.push(Token::simple(TokenKind::Atom, &input[i..i + 1]));
                i += 1;
            }
            _ => return Err(SmilesError::new(i, SmilesErrorKind::UnexpectedChar)),
        }
    }
    if let Some(&position) = open_parens.first() {
        return Err(SmilesError::new(
            position,
            SmilesErrorKind::UnbalancedOpenParen,
        ));
    }
    Ok(tokens)
}

/// Extract the atom map from a bracket token like `[CH3:12]`: the trailing
/// `:digits` immediately before `]`.
fn bracket_atom_map(text: &str) -> Option<u32> {
    let inner = text.strip_prefix('[')?.strip_suffix(']')?;
    let colon = inner.rfind(':')?;
    let digits = &inner[colon + 1..];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Remove `:n` atom-map suffixes from bracket atoms, leaving everything else
/// unchanged. Bracket atoms keep their brackets after map removal (`[CH3:1]`
/// becomes `[CH3]`, not `C`); deciding which brackets are droppable would
/// require valence reasoning, which is out of scope.
pub fn strip_atom_maps(input: &str) -> Result<String, SmilesError> {
    let tokens = tokenize(input)?;
    let mut out = String::with_capacity(input.len());
    for token in &tokens {
        if token.kind == TokenKind::BracketAtom && token.atom_map.is_some() {
            let inner = &token.text[1..token.text.len() - 1];
            let colon = inner.rfind(':').expect("map implies colon");
            out.push('[');
            out.push_str(&inner[..colon]);
            out.push(']');
        } else {
            out.push_str(&token.text);
        }
    }
    Ok(out)
}

/// All contiguous token n-grams for n in `[n_min, n_max]`, as concatenated
/// token texts. Shingles never cross dot tokens; each dot-separated component
/// is shingled independently. Returns a multiset (duplicates preserved).
pub fn shingles(tokens: &[Token], n_min: usize, n_max: usize) -> Vec<String> {
    assert!(n_min >= 1, "n_min must be at least 1");
    assert!(n_max >= n_min, "n_max must be at least n_min");
    let mut out = Vec::new();
    for component in tokens.split(|t| t.kind == TokenKind::Dot) {
        for n in n_min..=n_max {
            if component.len() < n {
                break;
            }
            for window in component.windows(n) {
                let mut shingle = String::new();
                for token in window {
                    shingle.push_str(&token.text);
                }
                out.push(shingle);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn tokenizes_plain_chain() {
        let tokens = tokenize("CCO").unwrap();
        assert_eq!(texts(&tokens), vec!["C", "C", "O"]);
        assert!(tokens.iter().all(|t| t.kind == TokenKind::Atom));
    }

    #[test]
    fn bracket_atom_with_map_is_one_token() {
        let tokens = tokenize("[CH3:1]Br").unwrap();
        assert_eq!(tokens.len(), 2);
        assert_eq!(tokens[0].kind, TokenKind::BracketAtom);
        assert_eq!(tokens[0].text, "[CH3:1]");
        assert_eq!(tokens[0].atom_map, Some(1));
        assert_eq!(tokens[1].text, "Br");
        assert_eq!(tokens[1].kind, TokenKind::Atom);
        assert_eq!(tokens[1].atom_map, None);
    }

    #[test]
    fn unbalanced_paren_reports_open_position() {
        let err = tokenize("C(Cl").unwrap_err();
        assert_eq!(err.position, 1);
        assert_eq!(err.kind, SmilesErrorKind::UnbalancedOpenParen);

        let err = tokenize("CCl)").unwrap_err();
        assert_eq!(err.position, 3);
        assert_eq!(err.kind, SmilesErrorKind::UnbalancedCloseParen);
    }

    #[test]
    fn unclosed_bracket_reports_position() {
        let err = tokenize("C[CH3").unwrap_err();
        assert_eq!(err.position, 1);
        assert_eq!(err.kind, SmilesErrorKind::UnclosedBracket);
    }

    #[test]
    fn two_letter_halogens_are_single_tokens() {
        let tokens = tokenize("ClBrCl").unwrap();
        assert_eq!(texts(&tokens), vec!["Cl", "Br", "Cl"]);
    }

    #[test]
    fn percent_ring_closures() {
        let tokens = tokenize("C%12CC%12").unwrap();
        assert_eq!(texts(&tokens), vec!["C", "%12", "C", "C", "%12"]);
        assert!(tokenize("C%1").is_err());
    }

    #[test]
    fn concat_reproduces_input() {
        for input in ["CCO", "[CH3:1]Br", "C(C(=O)O)N", "c1ccccc1", "CC.O", "C%10CC%10"] {
            let tokens = tokenize(input).unwrap();
            let rebuilt: String = tokens.iter().map(|t| t.text.as_str()).collect();
            assert_eq!(rebuilt, input);
        }
    }

    #[test]
    fn strip_removes_maps_and_keeps_brackets() {
        assert_eq!(strip_atom_maps("[CH3:1][OH:2]").unwrap(), "[CH3][OH]");
        assert_eq!(strip_atom_maps("CCO").unwrap(), "CCO");
    }

    #[test]
    fn strip_on_ring_bracket() {
        // Hand-tokenized: [C:12] | 1 | C | C | 1 -> map removed, brackets kept.
        assert_eq!(strip_atom_maps("[C:12]1CC1").unwrap(), "[C]1CC1");
    }

    #[test]
    fn strip_is_idempotent() {
        for input in ["[CH3:1][OH:2]", "[C:12]1CC1", "CCO", "[nH:4]1cccc1"] {
            let once = strip_atom_maps(input).unwrap();
            let twice = strip_atom_maps(&once).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn strip_preserves_charge_brackets() {
        assert_eq!(strip_atom_maps("[O-:3]").unwrap(), "[O-]");
        assert_eq!(strip_atom_maps("[NH4+]").unwrap(), "[NH4+]");
    }

    #[test]
    fn shingles_enumerate_ngrams() {
        let tokens = tokenize("CCO").unwrap();
        let mut got = shingles(&tokens, 1, 2);
        got.sort();
        assert_eq!(got, vec!["C", "C", "CC", "CO", "O"]);
    }

    #[test]
    fn shingles_of_empty_molecule_are_empty() {
        assert!(shingles(&[], 1, 3).is_empty());
    }

    #[test]
    fn shingles_never_cross_dots() {
        let tokens = tokenize("CC.O").unwrap();
        let got = shingles(&tokens, 1, 2);
        assert!(!got.iter().any(|s| s == "C.O" || s == ".O" || s == "C."));
        assert_eq!(got, vec!["C", "C", "CC", "O"]);
    }

    #[test]
    fn shingle_count_is_2m_minus_1_for_window_1_2() {
        for input in ["CCO", "CCCCC", "C"] {
            let tokens = tokenize(input).unwrap();
            let m = tokens.len();
            assert_eq!(shingles(&tokens, 1, 2).len(), 2 * m - 1);
        }
    }
}
