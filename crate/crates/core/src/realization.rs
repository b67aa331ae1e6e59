//! Encoder/channel/decoder schemes that realize the optimal reproduction
//! kernel, and the `(X, Y)` pair chain they induce.
//!
//! Every scheme has the Markov form used throughout the crate:
//!
//! ```text
//! source   P(x_i | x_{i-1})
//! encoder  P(a_i | x_i, b_{i-1})
//! channel  P(b_i | a_i, b_{i-1})
//! decoder  P(y_i | b_i, y_{i-1})
//! ```
//!
//! with an optional cost `c(x_i, y_{i-1})` and single-letter distortion
//! `ρ(x_i, y_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nrdf::{bsms_reproduction_kernel, BsmsSource, DistortionSpec, ReproductionKernel};
use crate::probcore::{stationary_distribution, Pmf, StochasticKernel};
use crate::scalar::Scalar;

/// Max entry-wise deviation accepted by [`verify_realization`].
pub const REALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Uncoded transmission over the reproduction kernel itself.
    Unmatched,
    /// Uncoded transmission with the binary sub-channel cost attached.
    Matched,
    /// XOR feedback encoder over the column-switched channel.
    MatchedFeedback,
    Custom,
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unmatched" => Ok(Self::Unmatched),
            "matched" => Ok(Self::Matched),
            "matched-feedback" => Ok(Self::MatchedFeedback),
            "custom" => Ok(Self::Custom),
            other => Err(Error::domain(format!("unknown scheme kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Unmatched => "unmatched",
            Self::Matched => "matched",
            Self::MatchedFeedback => "matched-feedback",
            Self::Custom => "custom",
        })
    }
}

/// Alphabet sizes of the four stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabets {
    pub x: usize,
    pub a: usize,
    pub b: usize,
    pub y: usize,
}

/// Conditioning symbols before time 0.
///
/// `a_{-1}` never enters the kernels, so it has no slot here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum InitialState {
    Fixed {
        x_prev: usize,
        b_prev: usize,
        y_prev: usize,
    },
    /// `x_{-1}` drawn from the source's stationary law; `b_{-1}`, `y_{-1}` fixed.
    SourceStationary {
        b_prev: usize,
        y_prev: usize,
    },
    /// `(x_{-1}, y_{-1})` drawn from the stationary pair law of the joint
    /// chain, `b_{-1}` the decoder preimage of `y_{-1}`.
    Stationary,
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::SourceStationary { b_prev: 0, y_prev: 0 }
    }
}

/// A hidden conditioning state `(x_{i-1}, b_{i-1}, y_{i-1})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrevState {
    pub x: usize,
    pub b: usize,
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemeDoc<T>", bound = "T: Scalar")]
pub struct TransmissionScheme<T> {
    kind: SchemeKind,
    source: StochasticKernel<T>,
    encoder: StochasticKernel<T>,
    channel: StochasticKernel<T>,
    decoder: StochasticKernel<T>,
    distortion: DistortionSpec<T>,
    cost: Option<Vec<Vec<T>>>,
    uses_feedback: bool,
    unitary_decoder: bool,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct SchemeDoc<T> {
    kind: SchemeKind,
    source: StochasticKernel<T>,
    encoder: StochasticKernel<T>,
    channel: StochasticKernel<T>,
    decoder: StochasticKernel<T>,
    distortion: DistortionSpec<T>,
    cost: Option<Vec<Vec<T>>>,
    uses_feedback: bool,
    unitary_decoder: bool,
}

impl<T: Scalar> TryFrom<SchemeDoc<T>> for TransmissionScheme<T> {
    type Error = Error;

    fn try_from(d: SchemeDoc<T>) -> Result<Self> {
        let mut s = TransmissionScheme::new(d.kind, d.source, d.encoder, d.channel, d.decoder, d.distortion)?;
        if let Some(c) = d.cost {
            s = s.with_cost(c)?;
        }
        s.uses_feedback = d.uses_feedback;
        if d.unitary_decoder {
            s = s.unitary()?;
        }
        Ok(s)
    }
}

impl<T: Scalar> TransmissionScheme<T> {
    /// Assembles a scheme, checking that stage alphabets line up.
    pub fn new(
        kind: SchemeKind,
        source: StochasticKernel<T>,
        encoder: StochasticKernel<T>,
        channel: StochasticKernel<T>,
        decoder: StochasticKernel<T>,
        distortion: DistortionSpec<T>,
    ) -> Result<Self> {
        let nx = source.output_alphabet();
        let na = encoder.output_alphabet();
        let nb = channel.output_alphabet();
        let ny = decoder.output_alphabet();
        let expect = |name: &str, k: &StochasticKernel<T>, want: [usize; 2]| -> Result<()> {
            if k.condition_alphabets() == want {
                Ok(())
            } else {
                Err(Error::shape(format!("{name} must be conditioned on {want:?}, got {:?}", k.condition_alphabets())))
            }
        };
        if source.condition_alphabets() != [nx] {
            return Err(Error::shape("source must be a square one-step kernel"));
        }
        expect("encoder", &encoder, [nx, nb])?;
        expect("channel", &channel, [na, nb])?;
        expect("decoder", &decoder, [nb, ny])?;
        if distortion.source_alphabet() != nx || distortion.reproduction_alphabet() != ny {
            return Err(Error::shape(format!(
                "distortion table is {}x{}, alphabets are {nx}x{ny}",
                distortion.source_alphabet(),
                distortion.reproduction_alphabet()
            )));
        }
        Ok(Self {
            kind,
            source,
            encoder,
            channel,
            decoder,
            distortion,
            cost: None,
            uses_feedback: false,
            unitary_decoder: false,
        })
    }

    /// Attaches a cost table `c(x_i, y_{i-1})`.
    pub fn with_cost(mut self, cost: Vec<Vec<T>>) -> Result<Self> {
        let a = self.alphabets();
        if cost.len() != a.x || cost.iter().any(|r| r.len() != a.y) {
            return Err(Error::shape(format!("cost table must be {}x{}", a.x, a.y)));
        }
        if cost.iter().flatten().any(|&c| !(c >= T::zero()) || !c.is_finite()) {
            return Err(Error::domain("costs must be finite and nonnegative"));
        }
        self.cost = Some(cost);
        Ok(self)
    }

    pub fn with_feedback(mut self, feedback: bool) -> Self {
        self.uses_feedback = feedback;
        self
    }

    /// Declares the decoder unitary; it must be a deterministic bijection `b -> y`.
    pub fn unitary(mut self) -> Result<Self> {
        self.decoder_map()?;
        self.unitary_decoder = true;
        Ok(self)
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn source(&self) -> &StochasticKernel<T> {
        &self.source
    }

    pub fn encoder(&self) -> &StochasticKernel<T> {
        &self.encoder
    }

    pub fn channel(&self) -> &StochasticKernel<T> {
        &self.channel
    }

    pub fn decoder(&self) -> &StochasticKernel<T> {
        &self.decoder
    }

    pub fn distortion(&self) -> &DistortionSpec<T> {
        &self.distortion
    }

    pub fn cost(&self) -> Option<&[Vec<T>]> {
        self.cost.as_deref()
    }

    pub fn uses_feedback(&self) -> bool {
        self.uses_feedback
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary_decoder
    }

    pub fn alphabets(&self) -> Alphabets {
        Alphabets {
            x: self.source.output_alphabet(),
            a: self.encoder.output_alphabet(),
            b: self.channel.output_alphabet(),
            y: self.decoder.output_alphabet(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scheme serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::domain(format!("invalid scheme document: {e}")))
    }

    /// The map `b -> y` when the decoder is a deterministic bijection that
    /// ignores `y_{i-1}`.
    pub fn decoder_map(&self) -> Result<Vec<usize>> {
        let a = self.alphabets();
        if a.b != a.y {
            return Err(Error::Structure(format!(
                "decoder maps {} channel outputs to {} symbols; not a bijection",
                a.b, a.y
            )));
        }
        let mut map = Vec::with_capacity(a.b);
        for b in 0..a.b {
            let row = self.decoder.row(&[b, 0]);
            let y = row
                .iter()
                .position(|&v| v == T::one())
                .ok_or_else(|| Error::Structure(format!("decoder is randomized at channel output {b}")))?;
            for yp in 1..a.y {
                if self.decoder.row(&[b, yp]) != row {
                    return Err(Error::Structure("decoder depends on its previous output".into()));
                }
            }
            map.push(y);
        }
        let mut seen = vec![false; a.y];
        for &y in &map {
            if std::mem::replace(&mut seen[y], true) {
                return Err(Error::Structure("decoder is not injective".into()));
            }
        }
        Ok(map)
    }

    /// The composed law `P(y_i | x_i, y_{i-1})`, marginalizing `a_i` and `b_i`.
    ///
    /// Needs a decoder that lets `b_{i-1}` be read off `y_{i-1}`.
    pub fn induced_kernel(&self) -> Result<StochasticKernel<T>> {
        let map = self.decoder_map()?;
        let a = self.alphabets();
        let mut inverse = vec![0; a.y];
        for (b, &y) in map.iter().enumerate() {
            inverse[y] = b;
        }
        let mut rows = Vec::with_capacity(a.x * a.y);
        for x in 0..a.x {
            for &bp in &inverse {
                let mut row = vec![T::zero(); a.y];
                for (sym_a, &pa) in self.encoder.row(&[x, bp]).iter().enumerate() {
                    if pa == T::zero() {
                        continue;
                    }
                    for (b, &pb) in self.channel.row(&[sym_a, bp]).iter().enumerate() {
                        row[map[b]] += pa * pb;
                    }
                }
                rows.push(row);
            }
        }
        StochasticKernel::new(vec![a.x, a.y], a.y, rows)
    }

    /// Distribution of the hidden state `(x_{-1}, b_{-1}, y_{-1})`.
    pub fn initial_distribution(&self, init: &InitialState) -> Result<Vec<(PrevState, T)>> {
        let a = self.alphabets();
        let check = |b: usize, y: usize| -> Result<()> {
            if b < a.b && y < a.y {
                Ok(())
            } else {
                Err(Error::domain(format!("initial symbols b = {b}, y = {y} outside alphabets")))
            }
        };
        match *init {
            InitialState::Fixed { x_prev, b_prev, y_prev } => {
                check(b_prev, y_prev)?;
                if x_prev >= a.x {
                    return Err(Error::domain(format!("initial source symbol {x_prev} outside alphabet")));
                }
                Ok(vec![(PrevState { x: x_prev, b: b_prev, y: y_prev }, T::one())])
            }
            InitialState::SourceStationary { b_prev, y_prev } => {
                check(b_prev, y_prev)?;
                let pi = stationary_distribution(&self.source)?;
                Ok((0..a.x)
                    .filter(|&x| pi[x] > T::zero())
                    .map(|x| (PrevState { x, b: b_prev, y: y_prev }, pi[x]))
                    .collect())
            }
            InitialState::Stationary => {
                let chain = joint_chain(self)?;
                let map = self.decoder_map()?;
                let mut inverse = vec![0; a.y];
                for (b, &y) in map.iter().enumerate() {
                    inverse[y] = b;
                }
                Ok(chain
                    .stationary
                    .as_slice()
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w > T::zero())
                    .map(|(z, &w)| {
                        let (x, y) = (z / a.y, z % a.y);
                        (PrevState { x, b: inverse[y], y }, w)
                    })
                    .collect())
            }
        }
    }
}

/// Prop.-1 style uncoded scheme: identity encoder and decoder around the
/// reproduction kernel used as the channel.
pub fn build_unmatched_scheme<T: Scalar>(p: T, d: T) -> Result<TransmissionScheme<T>> {
    let source = BsmsSource::new(p)?;
    let target = bsms_reproduction_kernel(&source, d)?;
    uncoded(SchemeKind::Unmatched, &source, &target)
}

fn uncoded<T: Scalar>(
    kind: SchemeKind,
    source: &BsmsSource<T>,
    target: &ReproductionKernel<T>,
) -> Result<TransmissionScheme<T>> {
    let encoder = StochasticKernel::deterministic(vec![2, 2], 2, |c| c[0])?;
    let channel = target.kernel.clone();
    let decoder = StochasticKernel::deterministic(vec![2, 2], 2, |c| c[0])?;
    TransmissionScheme::new(kind, source.kernel(), encoder, channel, decoder, DistortionSpec::hamming(2))?.unitary()
}

/// Matched scheme with cost `c(x_i, y_{i-1}) = 1` when `x_i = y_{i-1}` (the
/// `1 - α` sub-channel), else 0.
///
/// Without feedback this is the unmatched scheme plus the cost table. With
/// feedback the encoder sends `a_i = x_i ⊕ b_{i-1}` over the column-switched
/// channel `Q(b | a, b_prev) = P*(b | a ⊕ b_prev, b_prev)`.
pub fn build_matched_scheme<T: Scalar>(p: T, d: T, feedback: bool) -> Result<TransmissionScheme<T>> {
    let source = BsmsSource::new(p)?;
    let target = bsms_reproduction_kernel(&source, d)?;
    let cost = (0..2).map(|x| (0..2).map(|yp| if x == yp { T::one() } else { T::zero() }).collect()).collect();
    if !feedback {
        return uncoded(SchemeKind::Matched, &source, &target)?.with_cost(cost);
    }
    let encoder = StochasticKernel::deterministic(vec![2, 2], 2, |c| c[0] ^ c[1])?;
    let channel = StochasticKernel::from_fn(vec![2, 2], 2, |c, b| target.kernel.prob(&[c[0] ^ c[1], c[1]], b))?;
    let decoder = StochasticKernel::deterministic(vec![2, 2], 2, |c| c[0])?;
    TransmissionScheme::new(
        SchemeKind::MatchedFeedback,
        source.kernel(),
        encoder,
        channel,
        decoder,
        DistortionSpec::hamming(2),
    )?
    .unitary()?
    .with_cost(cost)
    .map(|s| s.with_feedback(true))
}

pub fn build_scheme<T: Scalar>(kind: SchemeKind, p: T, d: T) -> Result<TransmissionScheme<T>> {
    match kind {
        SchemeKind::Unmatched => build_unmatched_scheme(p, d),
        SchemeKind::Matched => build_matched_scheme(p, d, false),
        SchemeKind::MatchedFeedback => build_matched_scheme(p, d, true),
        SchemeKind::Custom => Err(Error::domain("custom schemes are assembled with TransmissionScheme::new")),
    }
}

/// The Markov chain on `z = (x_i, y_i)`, state index `x * |Y| + y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct JointChain<T> {
    pub transition: StochasticKernel<T>,
    pub stationary: Pmf<T>,
    pub expected_distortion: T,
    pub expected_cost: Option<T>,
}

pub fn joint_chain<T: Scalar>(scheme: &TransmissionScheme<T>) -> Result<JointChain<T>> {
    let induced = scheme.induced_kernel()?;
    let a = scheme.alphabets();
    let nz = a.x * a.y;
    let src = scheme.source();
    let transition = StochasticKernel::from_fn(vec![nz], nz, |c, to| {
        let (x, y) = (c[0] / a.y, c[0] % a.y);
        let (x2, y2) = (to / a.y, to % a.y);
        src.prob(&[x], x2) * induced.prob(&[x2, y], y2)
    })?;
    let stationary = stationary_distribution(&transition)?;
    let pi = stationary.as_slice();
    let rho = scheme.distortion();
    let expected_distortion = (0..nz).map(|z| pi[z] * rho.get(z / a.y, z % a.y)).sum();
    let expected_cost = scheme.cost().map(|cost| {
        let mut acc = T::zero();
        for (z, &w) in pi.iter().enumerate() {
            let (x, y) = (z / a.y, z % a.y);
            for (x2, c) in cost.iter().enumerate() {
                acc += w * src.prob(&[x], x2) * c[y];
            }
        }
        acc
    });
    Ok(JointChain { transition, stationary, expected_distortion, expected_cost })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationReport {
    pub max_deviation: f64,
    /// `(x, y_prev, y)` of the largest deviation.
    pub worst: (usize, usize, usize),
}

impl RealizationReport {
    pub fn is_ok(&self) -> bool {
        self.max_deviation <= REALIZATION_TOLERANCE
    }
}

/// Compares the scheme's composed `P(y | x, y_prev)` with `target` row by row.
pub fn verify_realization<T: Scalar>(
    scheme: &TransmissionScheme<T>,
    target: &ReproductionKernel<T>,
) -> Result<RealizationReport> {
    let induced = scheme.induced_kernel()?;
    if induced.condition_alphabets() != target.kernel.condition_alphabets()
        || induced.output_alphabet() != target.kernel.output_alphabet()
    {
        return Err(Error::shape(format!(
            "scheme induces {:?} -> {}, target is {:?} -> {}",
            induced.condition_alphabets(),
            induced.output_alphabet(),
            target.kernel.condition_alphabets(),
            target.kernel.output_alphabet()
        )));
    }
    let mut report = RealizationReport { max_deviation: 0.0, worst: (0, 0, 0) };
    for cond in induced.conditions() {
        for (y, (&u, &v)) in induced.row(&cond).iter().zip(target.kernel.row(&cond)).enumerate() {
            let dev = (u - v).abs().as_f64();
            if dev > report.max_deviation {
                report = RealizationReport { max_deviation: dev, worst: (cond[0], cond[1], y) };
            }
        }
    }
    Ok(report)
}
