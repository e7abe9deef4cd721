use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Splittable seed source. Every named stream is an independent ChaCha
/// stream keyed by the root seed, so consumers never share state and the
/// root seed alone reproduces a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn rng(&self, name: &str) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(fnv1a(name.as_bytes()));
        rng
    }

    /// Derived tree for a named sub-component.
    pub fn child(&self, name: &str) -> SeedTree {
        let mut bytes = self.root.to_le_bytes().to_vec();
        bytes.extend_from_slice(name.as_bytes());
        SeedTree::new(fnv1a(&bytes))
    }

    pub fn indexed(&self, name: &str, index: u64) -> ChaCha8Rng {
        self.child(&format!("{name}#{index}")).rng(name)
    }
}
