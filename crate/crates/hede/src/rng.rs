//! Counter-based deterministic random streams.
//!
//! Every stream is a pure function of `(seed, label, child index)`, so columns,
//! coordinates and noise entries can be generated in any order — or in
//! parallel — and still reproduce bit-identically. No state is shared between
//! streams.

/// An independent pseudo-random sequence identified by a 64-bit stream id.
#[derive(Clone, Debug)]
pub struct Stream {
    id: u64,
    counter: u64,
}

impl Stream {
    /// Stream for a `(seed, label)` pair, e.g. `Stream::new(seed, "maf")`.
    pub fn new(seed: u64, label: &str) -> Self {
        let id = mix64(seed ^ fnv1a64(label.as_bytes()).wrapping_mul(0x9E3779B97F4A7C15));
        Stream { id, counter: 0 }
    }

    /// Derive an independent child stream, e.g. one per column.
    pub fn child(&self, index: u64) -> Self {
        let id = mix64(self.id ^ mix64(index.wrapping_add(0xD1342543DE82EF95)));
        Stream { id, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.id ^ self.counter.wrapping_mul(0xBF58476D1CE4E5B9))
    }

    /// Uniform draw in the open interval (0, 1).
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / ((1u64 << 53) as f64 + 1.0);
        (((self.next_u64() >> 11) + 1) as f64) * SCALE
    }

    /// Uniform draw in `[low, high]`.
    pub fn next_uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.next_f64()
    }

    /// Standard normal draw via Box-Muller.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Binomial(2, pi) draw: a genotype minor-allele count.
    pub fn next_genotype(&mut self, pi: f64) -> u8 {
        let a = (self.next_f64() < pi) as u8;
        let b = (self.next_f64() < pi) as u8;
        a + b
    }
}

/// Deterministic seed for one benchmark replicate, mixing the base seed with
/// the scenario and replicate indices. Exposed so external drivers can
/// reproduce a single cell of a sweep.
pub fn replicate_seed(base: u64, scenario: u64, replicate: u64) -> u64 {
    mix64(mix64(base ^ scenario.wrapping_mul(0xA0761D6478BD642F)) ^ replicate.wrapping_add(0xE7037ED1A0B428DB))
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
