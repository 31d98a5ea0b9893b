//! Contraction expressions `C[..] = alpha A[..] * B[..] + beta C[..]`.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr   := "C[" labels "]" "=" scalar? "A[" labels "]" "*" "B[" labels "]" ( "+" scalar? "C[" labels "]" )?
//! labels := lowercase letters, possibly empty
//! scalar := decimal literal, e.g. 2, -0.5, 1e-3
//! ```
//!
//! An omitted alpha is 1. An omitted beta term means beta = 0; a present term
//! without a scalar means beta = 1.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("label '{label}' appears twice in {tensor}")]
    DuplicateLabel { tensor: char, label: char },

    #[error("output labels {found:?} must be exactly the labels in one input but not both ({expected:?})")]
    FreeIndexRule { expected: String, found: String },

    #[error("beta term C[{found}] must repeat the output labels C[{expected}]")]
    BetaTermMismatch { expected: String, found: String },
}

/// A parsed, validated contraction.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionSpec {
    pub a: Vec<char>,
    pub b: Vec<char>,
    pub c: Vec<char>,
    pub alpha: f64,
    pub beta: f64,
}

impl ContractionSpec {
    /// Builds and validates a spec from label strings.
    pub fn new(a: &str, b: &str, c: &str, alpha: f64, beta: f64) -> Result<Self, ParseError> {
        let spec = Self {
            a: a.chars().collect(),
            b: b.chars().collect(),
            c: c.chars().collect(),
            alpha,
            beta,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), ParseError> {
        for (name, labels) in [('A', &self.a), ('B', &self.b), ('C', &self.c)] {
            let mut seen = BTreeSet::new();
            for &l in labels {
                if !l.is_ascii_lowercase() {
                    return Err(ParseError::Syntax { pos: 0, msg: format!("label {l:?} is not a lowercase letter") });
                }
                if !seen.insert(l) {
                    return Err(ParseError::DuplicateLabel { tensor: name, label: l });
                }
            }
        }
        let a: BTreeSet<char> = self.a.iter().copied().collect();
        let b: BTreeSet<char> = self.b.iter().copied().collect();
        let c: BTreeSet<char> = self.c.iter().copied().collect();
        let free: BTreeSet<char> = a.symmetric_difference(&b).copied().collect();
        if c != free {
            return Err(ParseError::FreeIndexRule {
                expected: free.into_iter().collect(),
                found: self.c.iter().collect(),
            });
        }
        Ok(())
    }

    pub fn classify(&self) -> IndexClassification {
        classify_indices(self)
    }

    /// True when exactly one label is contracted.
    pub fn is_single_mode(&self) -> bool {
        self.classify().contracted.len() == 1
    }

    pub fn labels_a(&self) -> String {
        self.a.iter().collect()
    }

    pub fn labels_b(&self) -> String {
        self.b.iter().collect()
    }

    pub fn labels_c(&self) -> String {
        self.c.iter().collect()
    }
}

impl fmt::Display for ContractionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C[{}] = ", self.labels_c())?;
        if self.alpha != 1.0 {
            write!(f, "{:?} ", self.alpha)?;
        }
        write!(f, "A[{}] * B[{}]", self.labels_a(), self.labels_b())?;
        if self.beta != 0.0 {
            write!(f, " + {:?} C[{}]", self.beta, self.labels_c())?;
        }
        Ok(())
    }
}

impl std::str::FromStr for ContractionSpec {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_contraction(s)
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.text[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.text[self.pos..].chars().next()
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(c) if c == want => {
                self.pos += c.len_utf8();
                Ok(())
            }
            Some(c) => self.error(format!("expected '{want}', found '{c}'")),
            None => self.error(format!("expected '{want}', found end of input")),
        }
    }

    fn tensor(&mut self, name: char) -> Result<Vec<char>, ParseError> {
        self.expect(name)?;
        self.expect('[')?;
        let mut labels = Vec::new();
        loop {
            match self.peek() {
                Some(']') => {
                    self.pos += 1;
                    return Ok(labels);
                }
                Some(c) if c.is_ascii_lowercase() => {
                    labels.push(c);
                    self.pos += 1;
                }
                Some(c) => return self.error(format!("invalid label '{c}' in {name}[...]")),
                None => return self.error(format!("unterminated {name}[...]")),
            }
        }
    }

    /// Optional decimal literal.
    fn scalar(&mut self) -> Result<Option<f64>, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.text[start..];
        let len = rest
            .char_indices()
            .take_while(|&(i, c)| {
                c.is_ascii_digit()
                    || c == '.'
                    || c == 'e'
                    || c == 'E'
                    || ((c == '-' || c == '+') && (i == 0 || matches!(rest.as_bytes()[i - 1], b'e' | b'E')))
            })
            .last()
            .map_or(0, |(i, c)| i + c.len_utf8());
        if len == 0 {
            return Ok(None);
        }
        match rest[..len].parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos += len;
                Ok(Some(v))
            }
            _ => self.error(format!("invalid scalar {:?}", &rest[..len])),
        }
    }
}

pub fn parse_contraction(text: &str) -> Result<ContractionSpec, ParseError> {
    let mut cur = Cursor { text, pos: 0 };
    let c = cur.tensor('C')?;
    cur.expect('=')?;
    let alpha = cur.scalar()?.unwrap_or(1.0);
    let a = cur.tensor('A')?;
    cur.expect('*')?;
    let b = cur.tensor('B')?;
    let mut beta = 0.0;
    if cur.peek() == Some('+') {
        cur.pos += 1;
        beta = cur.scalar()?.unwrap_or(1.0);
        let c2 = cur.tensor('C')?;
        if c2 != c {
            return Err(ParseError::BetaTermMismatch {
                expected: c.iter().collect(),
                found: c2.iter().collect(),
            });
        }
    }
    if let Some(ch) = cur.peek() {
        return cur.error(format!("unexpected trailing '{ch}'"));
    }
    let spec = ContractionSpec { a, b, c, alpha, beta };
    spec.validate()?;
    Ok(spec)
}

/// Contracted labels `K = A ∩ B` and the free labels of each input, each in
/// the order they appear in their tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexClassification {
    pub contracted: Vec<char>,
    pub free_a: Vec<char>,
    pub free_b: Vec<char>,
}

pub fn classify_indices(spec: &ContractionSpec) -> IndexClassification {
    let contracted: Vec<char> = spec.a.iter().copied().filter(|l| spec.b.contains(l)).collect();
    let free_a = spec.a.iter().copied().filter(|l| !contracted.contains(l)).collect();
    let free_b = spec.b.iter().copied().filter(|l| !contracted.contains(l)).collect();
    IndexClassification { contracted, free_a, free_b }
}

/// The BLAS kernel a matricized contraction reduces to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Dot,
    Ger,
    Gemv,
    Gemm,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Dot => "DOT",
            KernelFamily::Ger => "GER",
            KernelFamily::Gemv => "GEMV",
            KernelFamily::Gemm => "GEMM",
        })
    }
}

pub fn kernel_family(cls: &IndexClassification) -> KernelFamily {
    let a_all = cls.free_a.is_empty();
    let b_all = cls.free_b.is_empty();
    if a_all && b_all {
        KernelFamily::Dot
    } else if cls.contracted.is_empty() {
        KernelFamily::Ger
    } else if a_all != b_all {
        KernelFamily::Gemv
    } else {
        KernelFamily::Gemm
    }
}
