//! Token vocabulary with the reserved blank symbol pinned at id 0.
//!
//! File format: UTF-8, one token per line, line number = token id. The first
//! line must be `<blank>`.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const BLANK_ID: TokenId = 0;
pub const BLANK: &str = "<blank>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from its tokens, blank first.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::Vocabulary(format!(
                "need the blank and at least one real token, got {} entries",
                tokens.len()
            )));
        }
        if tokens[0] != BLANK {
            return Err(Error::Vocabulary(format!(
                "token 0 must be {BLANK:?}, found {:?}",
                tokens[0]
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            if token.is_empty() {
                return Err(Error::Vocabulary(format!("token {id} is empty")));
            }
            if token.chars().any(char::is_whitespace) {
                return Err(Error::Vocabulary(format!("token {id} ({token:?}) contains whitespace")));
            }
            if index.insert(token.clone(), id as TokenId).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {token:?} at line {id}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Blank plus the given real tokens.
    pub fn with_tokens<I, S>(real: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens = vec![BLANK.to_string()];
        tokens.extend(real.into_iter().map(Into::into));
        Self::new(tokens)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        Self::new(body.split('\n').map(str::to_string).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical file contents: every token followed by `\n`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for token in &self.tokens {
            out.push_str(token);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Space-joins token strings.
    pub fn render(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.token(id).unwrap_or("<?>"));
        }
        out
    }

    /// Parses space-separated tokens into ids. The blank is not accepted.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|t| match self.id(t) {
                Some(BLANK_ID) => Err(Error::Vocabulary(format!("blank {BLANK:?} in token sequence"))),
                Some(id) => Ok(id),
                None => Err(Error::Vocabulary(format!("unknown token {t:?}"))),
            })
            .collect()
    }
}
