//! Group presentations and words over the generators.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::expr::CircleMapExpr;
use crate::lift::Lift;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WordError {
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("generator index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("group has no generators")]
    EmptyGenerators,
    #[error("malformed word token `{0}`")]
    MalformedToken(String),
}

/// Named generators of a finitely generated group of circle diffeomorphisms.
#[derive(Clone, Debug)]
pub struct GroupPresentation {
    generators: Vec<(String, Arc<CircleMapExpr>)>,
}

impl GroupPresentation {
    pub fn new(generators: Vec<(String, CircleMapExpr)>) -> Self {
        GroupPresentation {
            generators: generators
                .into_iter()
                .map(|(n, e)| (n, Arc::new(e)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.generators[i].0
    }

    pub fn expr(&self, i: usize) -> &Arc<CircleMapExpr> {
        &self.generators[i].1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.generators.iter().position(|(n, _)| n == name)
    }

    /// Canonical lifts of all generators and their inverses, in the letter
    /// order used by searches: `g0, g0^-1, g1, g1^-1, ...`.
    pub fn letter_lifts(&self) -> Vec<Lift> {
        let mut out = Vec::with_capacity(2 * self.len());
        for (_, e) in &self.generators {
            out.push(Lift::canonical(e.clone()));
            out.push(Lift::canonical(CircleMapExpr::inverse(e)));
        }
        out
    }
}

/// A word over the generators: the product of `generator(index)^exponent`
/// factors, leftmost factor acting last (standard composition order).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct Word {
    letters: Vec<(usize, i32)>,
}

impl Word {
    pub fn identity() -> Self {
        Word::default()
    }

    pub fn letter(index: usize, exponent: i32) -> Self {
        let mut w = Word::identity();
        w.push(index, exponent);
        w
    }

    pub fn from_letters(letters: Vec<(usize, i32)>) -> Self {
        let mut w = Word::identity();
        for (i, e) in letters {
            w.push(i, e);
        }
        w
    }

    pub fn letters(&self) -> &[(usize, i32)] {
        &self.letters
    }

    pub fn is_identity(&self) -> bool {
        self.letters.is_empty()
    }

    /// Append a factor on the right (it acts first), merging adjacent powers
    /// of the same generator.
    pub fn push(&mut self, index: usize, exponent: i32) {
        if exponent == 0 {
            return;
        }
        if let Some(last) = self.letters.last_mut() {
            if last.0 == index {
                last.1 += exponent;
                if last.1 == 0 {
                    self.letters.pop();
                }
                return;
            }
        }
        self.letters.push((index, exponent));
    }

    /// Prepend a factor on the left (it acts last).
    pub fn push_left(&mut self, index: usize, exponent: i32) {
        if exponent == 0 {
            return;
        }
        if let Some(first) = self.letters.first_mut() {
            if first.0 == index {
                first.1 += exponent;
                if first.1 == 0 {
                    self.letters.remove(0);
                }
                return;
            }
        }
        self.letters.insert(0, (index, exponent));
    }

    /// Product `self * other` (other acts first).
    pub fn concat(&self, other: &Word) -> Word {
        let mut w = self.clone();
        for &(i, e) in &other.letters {
            w.push(i, e);
        }
        w
    }

    pub fn inverse(&self) -> Word {
        let mut w = Word::identity();
        for &(i, e) in self.letters.iter().rev() {
            w.push(i, -e);
        }
        w
    }

    /// Conjugate `self * other * self^-1`.
    pub fn conjugate(&self, other: &Word) -> Word {
        self.concat(other).concat(&self.inverse())
    }

    pub fn pow(&self, n: i32) -> Word {
        if n == 0 {
            return Word::identity();
        }
        let base = if n > 0 { self.clone() } else { self.inverse() };
        let mut w = Word::identity();
        for _ in 0..n.unsigned_abs() {
            w = w.concat(&base);
        }
        w
    }

    /// Total letter count `sum |exponent|`.
    pub fn len(&self) -> usize {
        self.letters.iter().map(|(_, e)| e.unsigned_abs() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Parse a comma-separated word such as `f,g^-1,f^2` against the group's
    /// generator names.
    pub fn parse(text: &str, group: &GroupPresentation) -> Result<Word, WordError> {
        let mut w = Word::identity();
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Ok(w);
        }
        for token in trimmed.split(',') {
            let token = token.trim();
            let (name, exp) = match token.split_once('^') {
                Some((n, e)) => {
                    let exp: i32 = e
                        .parse()
                        .map_err(|_| WordError::MalformedToken(token.to_string()))?;
                    (n.trim(), exp)
                }
                None => (token, 1),
            };
            let idx = group
                .index_of(name)
                .ok_or_else(|| WordError::UnknownGenerator(name.to_string()))?;
            w.push(idx, exp);
        }
        Ok(w)
    }

    pub fn display(&self, group: &GroupPresentation) -> String {
        if self.letters.is_empty() {
            return "id".to_string();
        }
        self.letters
            .iter()
            .map(|&(i, e)| {
                if e == 1 {
                    group.name(i).to_string()
                } else {
                    format!("{}^{}", group.name(i), e)
                }
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "id");
        }
        let parts: Vec<String> = self
            .letters
            .iter()
            .map(|&(i, e)| {
                if e == 1 {
                    format!("g{i}")
                } else {
                    format!("g{i}^{e}")
                }
            })
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Expression for the word as a composition of generator powers.
pub fn word_to_expr(group: &GroupPresentation, word: &Word) -> Result<CircleMapExpr, WordError> {
    if group.is_empty() {
        return Err(WordError::EmptyGenerators);
    }
    let mut parts = Vec::with_capacity(word.letters().len());
    for &(i, e) in word.letters() {
        if i >= group.len() {
            return Err(WordError::IndexOutOfRange(i));
        }
        parts.push(CircleMapExpr::power(group.expr(i), e));
    }
    Ok(CircleMapExpr::compose_arcs(parts))
}

/// Canonical lift of the word.
pub fn word_to_lift(group: &GroupPresentation, word: &Word) -> Result<Lift, WordError> {
    Ok(Lift::canonical(Arc::new(word_to_expr(group, word)?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psl2z() -> GroupPresentation {
        GroupPresentation::new(vec![
            (
                "s".to_string(),
                CircleMapExpr::mobius([0.0, -1.0, 1.0, 0.0]).unwrap(),
            ),
            (
                "t".to_string(),
                CircleMapExpr::mobius([1.0, 1.0, 0.0, 1.0]).unwrap(),
            ),
        ])
    }

    #[test]
    fn empty_word_is_identity() {
        let g = psl2z();
        let l = word_to_lift(&g, &Word::identity()).unwrap();
        for i in 0..10 {
            let x = i as f64 * 0.1;
            assert_eq!(l.eval(x), x);
        }
    }

    #[test]
    fn cancellation_within_word() {
        let _g = psl2z();
        let mut w = Word::identity();
        w.push(1, 1);
        w.push(1, -1);
        assert!(w.is_identity());
        // Explicit non-merged cancellation evaluates to the identity too.
        let w2 = Word::from_letters(vec![(0, 1), (1, 1), (1, -1), (0, -1)]);
        assert!(w2.is_identity());
        let w3 = Word::from_letters(vec![(0, 1), (1, 1)])
            .concat(&Word::from_letters(vec![(1, -1), (0, -1)]));
        assert!(w3.is_identity());
    }

    #[test]
    fn word_evaluation_composes_in_order() {
        let g = psl2z();
        // s,t acts as S(T(x)).
        let w = Word::from_letters(vec![(0, 1), (1, 1)]);
        let l = word_to_lift(&g, &w).unwrap();
        let s = Lift::canonical(g.expr(0).clone());
        let t = Lift::canonical(g.expr(1).clone());
        for i in 0..20 {
            let x = i as f64 * 0.05;
            let direct = s.eval_circle(t.eval_circle(x));
            let via_word = l.eval_circle(x);
            assert!((direct - via_word).abs() < 1e-12 || (direct - via_word).abs() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn parse_words() {
        let g = psl2z();
        let w = Word::parse("s,t^-1,s^2", &g).unwrap();
        assert_eq!(w.letters(), &[(0, 1), (1, -1), (0, 2)]);
        assert_eq!(w.len(), 4);
        assert!(Word::parse("x", &g).is_err());
        assert!(Word::parse("", &g).unwrap().is_identity());
    }
}
