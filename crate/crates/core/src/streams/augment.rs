use super::{Epoch, EventStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Bos,
    Real,
    Fake,
    Eos,
}

/// One position of an augmented sequence. Sentinels and fake epochs carry the
/// fake label `M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Token {
    pub time: f64,
    pub label: usize,
    pub kind: TokenKind,
}

/// `BOS(0)`, the real epochs with `K` evenly spaced fake epochs inside every
/// positive-length gap, and `EOS(T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSequence {
    tokens: Vec<Token>,
    horizon: f64,
    label_count: usize,
    fake_count: usize,
}

impl AugmentedSequence {
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    /// The label reserved for fakes and sentinels.
    pub fn fake_label(&self) -> usize {
        self.label_count
    }

    pub fn fake_count(&self) -> usize {
        self.fake_count
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The original epochs, with fakes and sentinels removed.
    pub fn real_epochs(&self) -> Vec<Epoch> {
        self.tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Real)
            .map(|t| Epoch::new(t.time, t.label))
            .collect()
    }

    /// Builds a sequence from explicit tokens. Used for perturbation tests and
    /// hand-built inputs; no spacing rule is enforced.
    pub fn from_tokens(tokens: Vec<Token>, horizon: f64, label_count: usize) -> Self {
        Self { tokens, horizon, label_count, fake_count: 0 }
    }
}

pub fn augment(stream: &EventStream, fake_count: usize) -> AugmentedSequence {
    let m = stream.label_count();
    let horizon = stream.horizon();
    let mut skeleton = Vec::with_capacity(stream.len() + 2);
    skeleton.push(Token { time: 0.0, label: m, kind: TokenKind::Bos });
    skeleton.extend(stream.epochs().iter().map(|e| Token { time: e.time, label: e.label, kind: TokenKind::Real }));
    skeleton.push(Token { time: horizon, label: m, kind: TokenKind::Eos });

    let mut tokens = Vec::with_capacity(skeleton.len() * (fake_count + 1));
    tokens.push(skeleton[0]);
    for pair in skeleton.windows(2) {
        let (left, right) = (pair[0].time, pair[1].time);
        if right > left {
            let step = (right - left) / (fake_count + 1) as f64;
            for j in 1..=fake_count {
                tokens.push(Token { time: left + j as f64 * step, label: m, kind: TokenKind::Fake });
            }
        }
        tokens.push(pair[1]);
    }
    AugmentedSequence { tokens, horizon, label_count: m, fake_count }
}
