//! Exact capture and restore of `ChaCha8Rng` streams as integer lists.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub(crate) const WORDS: usize = 7;

pub(crate) fn encode(rng: &ChaCha8Rng) -> Vec<u64> {
    let seed = rng.get_seed();
    let mut out: Vec<u64> = seed
        .chunks(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    out.push(rng.get_stream());
    let pos = rng.get_word_pos();
    out.push((pos >> 64) as u64);
    out.push(pos as u64);
    out
}

pub(crate) fn decode(words: &[u64]) -> Result<ChaCha8Rng> {
    use rand::SeedableRng;
    if words.len() != WORDS {
        return Err(Error::Checkpoint(format!(
            "rng state needs {WORDS} words, got {}",
            words.len()
        )));
    }
    let mut seed = [0u8; 32];
    for (i, w) in words[..4].iter().enumerate() {
        seed[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(words[4]);
    rng.set_word_pos(((words[5] as u128) << 64) | words[6] as u128);
    Ok(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn restores_mid_stream() {
        let mut a = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..13 {
            a.random::<u64>();
        }
        let _: u32 = a.random();
        let mut b = decode(&encode(&a)).unwrap();
        for _ in 0..100 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }
}
