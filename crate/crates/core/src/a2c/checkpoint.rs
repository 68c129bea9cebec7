//! Versioned little-endian binary checkpoint for actor and critic networks.
//!
//! ```text
//! magic     8 bytes  "RBGSCKPT"
//! version   u32      1
//! count     u32      number of networks
//! per network:
//!   kind        u8    0 = actor, 1 = critic
//!   activation  u8    0 = relu, 1 = tanh
//!   n_sizes     u32
//!   sizes       n_sizes x u32   [input, hidden..., output]
//!   per layer:  weights row-major [out][in] as f32, then biases as f32
//! ```
//!
//! Actors come first in base-station order, followed by one critic.

use std::io::{Read, Write};
use std::path::Path;

use super::learner::{PolicyNetwork, ValueNetwork};
use super::nn::{Dense, Mlp};
use crate::config::Activation;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RBGSCKPT";
pub const VERSION: u32 = 1;

const KIND_ACTOR: u8 = 0;
const KIND_CRITIC: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub actors: Vec<PolicyNetwork<f32>>,
    pub critic: ValueNetwork<f32>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.actors.len() as u32 + 1).to_le_bytes())?;
        for a in &self.actors {
            write_net(&mut w, KIND_ACTOR, &a.net)?;
        }
        write_net(&mut w, KIND_CRITIC, &self.critic.net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let r = &mut bytes;
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}, expected {VERSION}")));
        }
        let count = read_u32(r)? as usize;
        if count < 2 {
            return Err(Error::Checkpoint(format!("expected at least one actor and a critic, found {count} networks")));
        }
        let mut actors = Vec::with_capacity(count - 1);
        let mut critic = None;
        for i in 0..count {
            let (kind, net) = read_net(r)?;
            match (kind, i + 1 == count) {
                (KIND_ACTOR, false) => actors.push(PolicyNetwork { net }),
                (KIND_CRITIC, true) => critic = Some(ValueNetwork { net }),
                (k, _) => return Err(Error::Checkpoint(format!("network {i} has unexpected kind {k}"))),
            }
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        let critic = critic.expect("last network is the critic");
        let dim = critic.net.input_dim();
        if critic.net.output_dim() != 1 {
            return Err(Error::Checkpoint("critic must have a single output".into()));
        }
        if let Some(a) = actors.iter().find(|a| a.net.input_dim() != dim || a.net.output_dim() != actors[0].net.output_dim()) {
            return Err(Error::Checkpoint(format!(
                "actor shape {:?} does not match critic input {dim} or the other actors",
                a.net.sizes()
            )));
        }
        Ok(Self { actors, critic })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_net<W: Write>(w: &mut W, kind: u8, net: &Mlp<f32>) -> std::io::Result<()> {
    let act = match net.activation() {
        Activation::Relu => 0u8,
        Activation::Tanh => 1u8,
    };
    w.write_all(&[kind, act])?;
    let sizes = net.sizes();
    w.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for s in &sizes {
        w.write_all(&(*s as u32).to_le_bytes())?;
    }
    for layer in net.layers() {
        for o in 0..layer.n_out() {
            for i in 0..layer.n_in() {
                w.write_all(&layer.weight(o, i).to_le_bytes())?;
            }
        }
        for b in layer.bias() {
            w.write_all(&b.to_le_bytes())?;
        }
    }
    Ok(())
}

fn truncated() -> Error {
    Error::Checkpoint("file is truncated".into())
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| truncated())
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32(r: &mut &[u8]) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn read_net(r: &mut &[u8]) -> Result<(u8, Mlp<f32>)> {
    let mut head = [0u8; 2];
    read_exact(r, &mut head)?;
    let activation = match head[1] {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        a => return Err(Error::Checkpoint(format!("unknown activation code {a}"))),
    };
    let n = read_u32(r)? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Checkpoint(format!("implausible layer count {n}")));
    }
    let sizes = (0..n).map(|_| read_u32(r).map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(n - 1);
    for w in sizes.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        if n_in == 0 || n_out == 0 || n_in.saturating_mul(n_out).saturating_mul(4) > r.len() {
            return Err(truncated());
        }
        let mut layer = Dense::zeros(n_in, n_out);
        for o in 0..n_out {
            for i in 0..n_in {
                layer.set_weight(o, i, read_f32(r)?);
            }
        }
        for b in layer.bias_mut() {
            *b = read_f32(r)?;
        }
        layers.push(layer);
    }
    Ok((head[0], Mlp::from_layers(layers, activation)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let actors = (0..3).map(|_| PolicyNetwork::new(10, 4, &[6, 5], Activation::Relu, &mut rng)).collect();
        let critic = ValueNetwork::new(10, &[6, 5], Activation::Relu, &mut rng);
        Checkpoint { actors, critic }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let bits = |c: &Checkpoint| -> Vec<u32> {
            c.actors.iter().map(|a| &a.net).chain([&c.critic.net]).flat_map(|n| n.params()).map(f32::to_bits).collect()
        };
        assert_eq!(bits(&back), bits(&ck));
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], b"RBGSCKPT");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 4);
        assert_eq!(bytes[16], KIND_ACTOR);
        // 4 layer sizes follow; then layer 0, output 0, input 0.
        assert_eq!(u32::from_le_bytes(bytes[18..22].try_into().unwrap()), 4);
        let w = f32::from_le_bytes(bytes[38..42].try_into().unwrap());
        assert_eq!(w, sample().actors[0].net.layers()[0].weight(0, 0));
    }

    #[test]
    fn rejects_version_and_corruption() {
        let mut bytes = sample().to_bytes();
        bytes[8] = 2;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(m)) if m.contains("version 2")));

        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPT\x01\0\0\0").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn rejects_mismatched_actor_shape() {
        let mut ck = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        ck.actors[1] = PolicyNetwork::new(9, 4, &[6, 5], Activation::Relu, &mut rng);
        assert!(Checkpoint::from_bytes(&ck.to_bytes()).is_err());
    }
}
