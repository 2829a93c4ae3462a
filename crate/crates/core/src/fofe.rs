//! Fixed-size ordinally forgetting encoding (FOFE).
//!
//! A token sequence `w_1 .. w_N` over a vocabulary `V` is encoded by the recursion
//! `z_n = alpha * z_{n-1} + e_n` with `z_0 = 0`, where `e_n` is the one-hot vector of `w_n`.
//! The final `z_N` has length `|V|` whatever `N` is. A dual code concatenates two such codes
//! computed with different forgetting factors.
//!
//! Because the code is linear in the one-hot vectors, projecting it through an embedding
//! matrix `E` (`|V| x d`) is the same as running the recursion directly over embedding rows;
//! [`encode_projected`] does the latter without ever materialising a `|V|`-sized vector.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::error::{Error, Result};
use crate::tensor::{axpy, Matrix, Scalar};

/// Token reserved for out-of-vocabulary lookups.
pub const OOV_TOKEN: &str = "<unk>";

/// Bijective token <-> index map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    oov: Option<usize>,
}

impl Vocabulary {
    /// Vocabulary over `tokens` in the given order. Duplicates are rejected.
    /// Without an OOV slot, encoding an unknown token is an error.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::default();
        for t in tokens {
            vocab.push(t.into())?;
        }
        vocab.oov = vocab.index.get(OOV_TOKEN).copied();
        Ok(vocab)
    }

    /// Vocabulary with [`OOV_TOKEN`] at index 0 followed by the distinct `tokens` in sorted order.
    pub fn with_oov<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = tokens
            .into_iter()
            .map(Into::into)
            .filter(|t| t != OOV_TOKEN)
            .collect();
        Self::from_tokens(std::iter::once(OOV_TOKEN.to_owned()).chain(sorted))
            .expect("sorted set has no duplicates")
    }

    fn push(&mut self, token: String) -> Result<()> {
        if self.index.contains_key(&token) {
            return Err(Error::Validation(format!(
                "duplicate vocabulary token `{token}`"
            )));
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token_at(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(String::as_str)
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn oov(&self) -> Option<usize> {
        self.oov
    }

    /// Index of `token`, falling back to the OOV slot.
    pub fn index_of(&self, token: &str) -> Result<usize> {
        self.lookup(token)
            .or(self.oov)
            .ok_or_else(|| Error::UnknownToken(token.to_owned()))
    }

    pub fn indices<S: AsRef<str>>(&self, seq: &[S]) -> Result<Vec<usize>> {
        seq.iter().map(|t| self.index_of(t.as_ref())).collect()
    }
}

/// Forgetting factor, validated to lie strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::Config(format!(
                "forgetting factor must lie in (0, 1), got {alpha}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FofeCode {
    pub values: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualFofeCode {
    pub low: FofeCode,
    pub high: FofeCode,
}

impl DualFofeCode {
    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.low.values.len() * 2);
        v.extend_from_slice(&self.low.values);
        v.extend_from_slice(&self.high.values);
        v
    }
}

/// Sparse FOFE code of an index sequence: `(index, weight)` pairs sorted by index.
///
/// The token at position `n` of `N` contributes `alpha^(N-n)`.
pub fn encode_sparse(ids: &[usize], alpha: Alpha) -> Vec<(usize, f64)> {
    let mut weighted: Vec<(usize, f64)> = Vec::with_capacity(ids.len());
    let mut w = 1.0;
    for &id in ids.iter().rev() {
        weighted.push((id, w));
        w *= alpha.0;
    }
    weighted.sort_by_key(|&(id, _)| id);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(weighted.len());
    for (id, w) in weighted {
        match out.last_mut() {
            Some((last, acc)) if *last == id => *acc += w,
            _ => out.push((id, w)),
        }
    }
    out
}

pub fn encode<S: AsRef<str>>(seq: &[S], vocab: &Vocabulary, alpha: f64) -> Result<FofeCode> {
    let alpha = Alpha::new(alpha)?;
    let ids = vocab.indices(seq)?;
    let mut values = vec![0.0; vocab.len()];
    for (id, w) in encode_sparse(&ids, alpha) {
        values[id] = w;
    }
    Ok(FofeCode {
        values,
        alpha: alpha.get(),
    })
}

pub fn encode_dual<S: AsRef<str>>(
    seq: &[S],
    vocab: &Vocabulary,
    alphas: (f64, f64),
) -> Result<DualFofeCode> {
    check_alpha_pair(alphas)?;
    Ok(DualFofeCode {
        low: encode(seq, vocab, alphas.0)?,
        high: encode(seq, vocab, alphas.1)?,
    })
}

pub(crate) fn check_alpha_pair(alphas: (f64, f64)) -> Result<(Alpha, Alpha)> {
    let low = Alpha::new(alphas.0)?;
    let high = Alpha::new(alphas.1)?;
    if low == high {
        return Err(Error::Config(format!(
            "dual FOFE needs two different forgetting factors, got {} twice",
            alphas.0
        )));
    }
    Ok((low, high))
}

/// FOFE code computed directly in embedding space: `z_n = alpha * z_{n-1} + E[w_n]`.
pub fn encode_projected<S: AsRef<str>, T: Scalar>(
    seq: &[S],
    vocab: &Vocabulary,
    embeddings: &Matrix<T>,
    alpha: f64,
) -> Result<Vec<T>> {
    let alpha = Alpha::new(alpha)?;
    if embeddings.rows() != vocab.len() {
        return Err(Error::Dimension(format!(
            "embedding matrix has {} rows for a vocabulary of {}",
            embeddings.rows(),
            vocab.len()
        )));
    }
    let a = T::of(alpha.get());
    let mut z = vec![T::zero(); embeddings.cols()];
    for id in vocab.indices(seq)? {
        z.iter_mut().for_each(|v| *v *= a);
        axpy(T::one(), embeddings.row(id), &mut z);
    }
    Ok(z)
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error(
        "brute-force decoding is limited to |V| <= 10 and max_len <= 8 (got {vocab} and {max_len})"
    )]
    TooLarge { vocab: usize, max_len: usize },
    #[error("code length {code} does not match vocabulary size {vocab}")]
    Dimension { code: usize, vocab: usize },
    #[error("uniqueness violated: {first:?} and {second:?} share one code")]
    Ambiguous {
        first: Vec<String>,
        second: Vec<String>,
    },
}

/// Matching tolerance (L-infinity) used by [`decode_bruteforce`].
pub const DECODE_TOLERANCE: f64 = 1e-9;

/// Exhaustive decoder: enumerates every sequence of length `0..=max_len` and returns the one
/// whose code matches `code` within [`DECODE_TOLERANCE`]. Exponential; a test oracle only.
pub fn decode_bruteforce(
    code: &FofeCode,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Option<Vec<String>>, DecodeError> {
    let v = vocab.len();
    if v > 10 || max_len > 8 {
        return Err(DecodeError::TooLarge { vocab: v, max_len });
    }
    if code.values.len() != v {
        return Err(DecodeError::Dimension {
            code: code.values.len(),
            vocab: v,
        });
    }

    let matches = |z: &[f64]| {
        z.iter()
            .zip(&code.values)
            .all(|(a, b)| (a - b).abs() <= DECODE_TOLERANCE)
    };

    // codes[d] holds the code of the current prefix of length d.
    let mut codes = vec![vec![0.0; v]; max_len + 1];
    let mut prefix: Vec<usize> = Vec::with_capacity(max_len);
    let mut found: Option<Vec<usize>> = None;
    let mut ambiguous: Option<Vec<usize>> = None;

    fn walk(
        depth: usize,
        max_len: usize,
        alpha: f64,
        codes: &mut [Vec<f64>],
        prefix: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize], &[f64]),
    ) {
        visit(prefix, &codes[depth]);
        if depth == max_len {
            return;
        }
        let v = codes[depth].len();
        for t in 0..v {
            let (head, tail) = codes.split_at_mut(depth + 1);
            let next = &mut tail[0];
            for (n, p) in next.iter_mut().zip(&head[depth]) {
                *n = alpha * p;
            }
            next[t] += 1.0;
            prefix.push(t);
            walk(depth + 1, max_len, alpha, codes, prefix, visit);
            prefix.pop();
        }
    }

    walk(
        0,
        max_len,
        code.alpha,
        &mut codes,
        &mut prefix,
        &mut |seq: &[usize], z: &[f64]| {
            if ambiguous.is_none() && matches(z) {
                if found.is_none() {
                    found = Some(seq.to_vec());
                } else {
                    ambiguous = Some(seq.to_vec());
                }
            }
        },
    );

    let names = |ids: Vec<usize>| -> Vec<String> {
        ids.into_iter()
            .map(|i| vocab.token_at(i).unwrap_or_default().to_owned())
            .collect()
    };
    match (found, ambiguous) {
        (Some(first), Some(second)) => Err(DecodeError::Ambiguous {
            first: names(first),
            second: names(second),
        }),
        (found, _) => Ok(found.map(names)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn abc() -> Vocabulary {
        Vocabulary::from_tokens(["A", "B", "C"]).unwrap()
    }

    #[test]
    fn empty_sequence_is_zero() {
        let code = encode::<&str>(&[], &abc(), 0.5).unwrap();
        assert_eq!(code.values, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn hand_unrolled_recursion() {
        // z1 = [1,0,0], z2 = [0.5,1,0], z3 = [0.25,0.5,1]
        let code = encode(&["A", "B", "C"], &abc(), 0.5).unwrap();
        assert_eq!(code.values, vec![0.25, 0.5, 1.0]);
        // z2 = 0.5 e_A + e_A
        let code = encode(&["A", "A"], &abc(), 0.5).unwrap();
        assert_eq!(code.values, vec![1.5, 0.0, 0.0]);
    }

    #[test]
    fn alpha_out_of_range_is_config_error() {
        for bad in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(encode(&["A"], &abc(), bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn unknown_token_maps_to_oov_slot() {
        let vocab = Vocabulary::with_oov(["a", "b"]);
        assert_eq!(vocab.token_at(0), Some(OOV_TOKEN));
        let code = encode(&["zzz", "a"], &vocab, 0.5).unwrap();
        assert_eq!(code.values, vec![0.5, 1.0, 0.0]);
        assert!(matches!(
            encode(&["zzz"], &abc(), 0.5),
            Err(Error::UnknownToken(_))
        ));
    }

    #[test]
    fn vocabulary_is_bijective() {
        let vocab = Vocabulary::with_oov(["x", "y", "x", "w"]);
        assert_eq!(vocab.len(), 4);
        for i in 0..vocab.len() {
            assert_eq!(vocab.lookup(vocab.token_at(i).unwrap()), Some(i));
        }
        assert!(Vocabulary::from_tokens(["a", "a"]).is_err());
    }

    #[test]
    fn dual_examples() {
        let ab = Vocabulary::from_tokens(["A", "B"]).unwrap();
        let d = encode_dual(&["A"], &ab, (0.5, 0.9)).unwrap();
        assert_eq!(d.low.values, vec![1.0, 0.0]);
        assert_eq!(d.high.values, vec![1.0, 0.0]);
        let d = encode_dual(&["A", "B"], &ab, (0.5, 0.9)).unwrap();
        assert_eq!(d.concat(), vec![0.5, 1.0, 0.9, 1.0]);
        let d = encode_dual::<&str>(&[], &ab, (0.5, 0.9)).unwrap();
        assert_eq!(d.concat(), vec![0.0; 4]);
        assert!(matches!(
            encode_dual(&["A"], &ab, (0.7, 0.7)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn projected_identity_and_empty() {
        let vocab = abc();
        let eye = Matrix::<f64>::identity(3);
        let seq = ["C", "A", "B", "A"];
        let direct = encode(&seq, &vocab, 0.5).unwrap();
        assert_eq!(
            encode_projected(&seq, &vocab, &eye, 0.5).unwrap(),
            direct.values
        );
        let e = Matrix::<f64>::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        assert_eq!(
            encode_projected::<&str, f64>(&[], &vocab, &e, 0.5).unwrap(),
            vec![0.0, 0.0]
        );
        let wrong = Matrix::<f64>::zeros(4, 2);
        assert!(matches!(
            encode_projected(&seq, &vocab, &wrong, 0.5),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn projected_matches_explicit_then_project() {
        let vocab = abc();
        // d = 2, fixed "random" matrix
        let e = Matrix::from_vec(3, 2, vec![0.3, -1.2, 2.5, 0.7, -0.4, 1.9]).unwrap();
        let seq = ["A", "B", "C"];
        let z = encode(&seq, &vocab, 0.5).unwrap().values; // [0.25, 0.5, 1]
        let mut oracle = vec![0.0; 2];
        e.matvec_t_acc(&z, &mut oracle);
        let got = encode_projected(&seq, &vocab, &e, 0.5).unwrap();
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-10);
        }
        // 0.25*[0.3,-1.2] + 0.5*[2.5,0.7] + [-0.4,1.9]
        assert!((got[0] - 0.925).abs() < 1e-12);
        assert!((got[1] - 1.95).abs() < 1e-12);
    }

    #[test]
    fn decode_examples() {
        let vocab = abc();
        let code = encode(&["A", "B", "C"], &vocab, 0.5).unwrap();
        assert_eq!(
            decode_bruteforce(&code, &vocab, 4).unwrap(),
            Some(vec!["A".into(), "B".into(), "C".into()])
        );
        let zero = FofeCode {
            values: vec![0.0; 3],
            alpha: 0.5,
        };
        assert_eq!(decode_bruteforce(&zero, &vocab, 4).unwrap(), Some(vec![]));
        let ba = encode(&["B", "A"], &vocab, 0.5).unwrap();
        assert_eq!(
            decode_bruteforce(&ba, &vocab, 4).unwrap(),
            Some(vec!["B".into(), "A".into()])
        );
        let none = FofeCode {
            values: vec![0.1, 0.0, 0.0],
            alpha: 0.5,
        };
        assert_eq!(decode_bruteforce(&none, &vocab, 4).unwrap(), None);
    }

    #[test]
    fn decode_reports_ambiguity_distinctly() {
        // alpha this close to 1 makes [A,B] and [B,A] indistinguishable at the tolerance
        let vocab = Vocabulary::from_tokens(["A", "B"]).unwrap();
        let code = FofeCode {
            values: vec![1.0, 1.0],
            alpha: 1.0 - 1e-12,
        };
        assert!(matches!(
            decode_bruteforce(&code, &vocab, 2),
            Err(DecodeError::Ambiguous { .. })
        ));
        let big = Vocabulary::with_oov((0..11).map(|i| i.to_string()));
        let code = FofeCode {
            values: vec![0.0; big.len()],
            alpha: 0.5,
        };
        assert!(matches!(
            decode_bruteforce(&code, &big, 2),
            Err(DecodeError::TooLarge { .. })
        ));
    }

    fn seq_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0usize..5, 0..12)
    }

    proptest! {
        #[test]
        fn recursion_consistency(seq in seq_strategy(), t in 0usize..5, alpha in 0.01f64..0.99) {
            let vocab = Vocabulary::from_tokens(["a", "b", "c", "d", "e"]).unwrap();
            let names: Vec<&str> = seq.iter().map(|&i| vocab.token_at(i).unwrap()).collect();
            let mut longer = names.clone();
            longer.push(vocab.token_at(t).unwrap());
            let z = encode(&names, &vocab, alpha).unwrap().values;
            let z_next = encode(&longer, &vocab, alpha).unwrap().values;
            for i in 0..5 {
                let expected = alpha * z[i] + if i == t { 1.0 } else { 0.0 };
                prop_assert!((z_next[i] - expected).abs() <= 1e-12);
                prop_assert!(z_next[i] >= 0.0);
            }
        }

        #[test]
        fn dual_low_half_equals_single(seq in seq_strategy()) {
            let vocab = Vocabulary::from_tokens(["a", "b", "c", "d", "e"]).unwrap();
            let names: Vec<&str> = seq.iter().map(|&i| vocab.token_at(i).unwrap()).collect();
            let dual = encode_dual(&names, &vocab, (0.5, 0.9)).unwrap();
            prop_assert_eq!(&dual.low, &encode(&names, &vocab, 0.5).unwrap());
            prop_assert_eq!(&dual.high, &encode(&names, &vocab, 0.9).unwrap());
            prop_assert_eq!(dual.concat().len(), 10);
        }
    }
}
