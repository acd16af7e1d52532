//! Versioned binary parameter dumps with a plain-text manifest.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::nets::{AgentNets, Linear, Mlp};

const MAGIC: &[u8; 4] = b"DGEC";
const VERSION: u32 = 1;

fn write_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn write_mlp(buf: &mut Vec<u8>, mlp: &Mlp) {
    write_u32(buf, mlp.layers.len() as u32);
    for layer in &mlp.layers {
        write_u32(buf, layer.w.shape()[0] as u32);
        write_u32(buf, layer.w.shape()[1] as u32);
        for &x in layer.w.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for &x in layer.b.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        if end > self.bytes.len() {
            return Err(Error::Io("truncated checkpoint".into()));
        }
        let v = u32::from_le_bytes(self.bytes[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(v)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let end = self.pos + 8 * n;
        if end > self.bytes.len() {
            return Err(Error::Io("truncated checkpoint".into()));
        }
        let out = self.bytes[self.pos..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.pos = end;
        Ok(out)
    }

    fn mlp(&mut self) -> Result<Mlp> {
        let n_layers = self.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = self.u32()? as usize;
            let cols = self.u32()? as usize;
            let w = Tensor::matrix(rows, cols, self.f64s(rows * cols)?)?;
            let b = Tensor::vector(self.f64s(cols)?);
            layers.push(Linear { w, b });
        }
        Ok(Mlp { layers })
    }
}

fn shape_lines(out: &mut String, agent: usize, name: &str, mlp: &Mlp) {
    for (l, layer) in mlp.layers.iter().enumerate() {
        out.push_str(&format!(
            "agent {agent} {name} layer {l}: w [{} x {}], b [{}]\n",
            layer.w.shape()[0],
            layer.w.shape()[1],
            layer.b.numel()
        ));
    }
}

/// Write `checkpoint.bin` and `manifest.txt` (shape table plus the resolved
/// config echo) into `dir`.
pub fn save_checkpoint(dir: &Path, nets: &[AgentNets], config_echo: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    write_u32(&mut buf, VERSION);
    write_u32(&mut buf, nets.len() as u32);
    for agent in nets {
        write_mlp(&mut buf, &agent.policy);
        write_mlp(&mut buf, &agent.critic);
        write_mlp(&mut buf, &agent.target_policy);
        write_mlp(&mut buf, &agent.target_critic);
    }
    fs::write(dir.join("checkpoint.bin"), &buf)?;

    let mut manifest = String::from("checkpoint format v1\n");
    for line in config_echo {
        manifest.push_str(line);
        manifest.push('\n');
    }
    for (i, agent) in nets.iter().enumerate() {
        shape_lines(&mut manifest, i, "policy", &agent.policy);
        shape_lines(&mut manifest, i, "critic", &agent.critic);
        shape_lines(&mut manifest, i, "target_policy", &agent.target_policy);
        shape_lines(&mut manifest, i, "target_critic", &agent.target_critic);
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

/// Load parameters from `checkpoint.bin` in `dir`; optimizer state is
/// reinitialized with the given learning rates.
pub fn load_checkpoint(dir: &Path, lr_policy: f64, lr_critic: f64) -> Result<Vec<AgentNets>> {
    let mut bytes = Vec::new();
    fs::File::open(dir.join("checkpoint.bin"))?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Io("not a checkpoint file".into()));
    }
    r.pos = 4;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Io(format!("unsupported checkpoint version {version}")));
    }
    let n_agents = r.u32()? as usize;
    let mut nets = Vec::with_capacity(n_agents);
    for _ in 0..n_agents {
        let policy = r.mlp()?;
        let critic = r.mlp()?;
        let target_policy = r.mlp()?;
        let target_critic = r.mlp()?;
        let policy_opt = crate::optim::AdamState::new(&policy.param_shapes(), lr_policy);
        let critic_opt = crate::optim::AdamState::new(&critic.param_shapes(), lr_critic);
        nets.push(AgentNets { policy, critic, target_policy, target_critic, policy_opt, critic_opt });
    }
    Ok(nets)
}
