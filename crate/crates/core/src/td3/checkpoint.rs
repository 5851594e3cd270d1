//! Plain-text agent checkpoints: a header naming the agent kind, its state
//! and action channels, learner counters, the RNG position and the
//! hyperparameters, followed by all six networks. Optimiser moments are not
//! stored; a loaded agent starts them afresh.

use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;

use super::{AgentConfig, AgentKind, TD3Hyper, Td3Agent};
use crate::neural::{Mlp, TextReader};
use crate::{Error, Result};

pub const AGENT_FORMAT: &str = "dolly-agent";
const VERSION: &str = "1";
const NETWORKS: [&str; 6] = ["actor", "actor_target", "critic1", "critic2", "critic1_target", "critic2_target"];

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

pub fn save_agent(agent: &Td3Agent) -> Result<String> {
    let mut out = String::new();
    let cfg = agent.config();
    let _ = writeln!(out, "{AGENT_FORMAT} {VERSION}");
    let _ = writeln!(out, "kind {}", cfg.kind.as_str());
    let _ = writeln!(out, "state_indices {}", join(&cfg.state_indices));
    let _ = writeln!(out, "action_indices {}", join(&cfg.action_indices));
    let _ = writeln!(
        out,
        "counters {} {} {}",
        agent.exploration_steps, agent.critic_iterations, agent.actor_updates
    );
    let seed: String = agent.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
    let _ = writeln!(out, "rng {seed} {} {}", agent.rng.get_stream(), agent.rng.get_word_pos());
    let hyper = toml::to_string(agent.hyper()).map_err(|e| Error::Config(format!("hyperparameters: {e}")))?;
    let lines: Vec<&str> = hyper.lines().filter(|l| !l.trim().is_empty()).collect();
    let _ = writeln!(out, "hyper {}", lines.len());
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
    let nets = [
        &agent.actor,
        &agent.actor_target,
        &agent.critic1,
        &agent.critic2,
        &agent.critic1_target,
        &agent.critic2_target,
    ];
    for (name, net) in NETWORKS.iter().zip(nets) {
        let _ = writeln!(out, "network {name}");
        net.write_text(&mut out);
    }
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(toks: &[&str], what: &'static str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    toks.iter().map(|t| t.parse().map_err(|e| Error::parse(what, e))).collect()
}

pub fn load_agent(text: &str) -> Result<Td3Agent> {
    let mut r = TextReader::new(text);
    let version = r.expect_key(AGENT_FORMAT)?;
    if version != [VERSION] {
        return Err(Error::parse("agent checkpoint", format!("unsupported version {version:?}")));
    }
    let kind: AgentKind = match r.expect_key("kind")?.as_slice() {
        [k] => k.parse()?,
        other => return Err(Error::parse("agent checkpoint", format!("bad kind line {other:?}"))),
    };
    let config = AgentConfig {
        kind,
        state_indices: parse_list(&r.expect_key("state_indices")?, "state indices")?,
        action_indices: parse_list(&r.expect_key("action_indices")?, "action indices")?,
    };
    if config != AgentConfig::new(kind) {
        return Err(Error::parse("agent checkpoint", "channel indices do not match the agent kind"));
    }
    let counters: Vec<u64> = parse_list(&r.expect_key("counters")?, "counters")?;
    let [exploration_steps, critic_iterations, actor_updates] = counters[..] else {
        return Err(Error::parse("agent checkpoint", "counters need three values"));
    };
    let rng = match r.expect_key("rng")?.as_slice() {
        [seed, stream, pos] => parse_rng(seed, stream, pos)?,
        other => return Err(Error::parse("agent checkpoint", format!("bad rng line {other:?}"))),
    };
    let n: usize = match r.expect_key("hyper")?.as_slice() {
        [n] => n.parse().map_err(|e| Error::parse("hyper block", e))?,
        other => return Err(Error::parse("agent checkpoint", format!("bad hyper line {other:?}"))),
    };
    let mut hyper_text = String::new();
    for _ in 0..n {
        hyper_text.push_str(r.next_line()?);
        hyper_text.push('\n');
    }
    let hyper: TD3Hyper = toml::from_str(&hyper_text).map_err(|e| Error::parse("hyper block", e))?;
    hyper.validate()?;

    let mut nets = Vec::with_capacity(NETWORKS.len());
    for name in NETWORKS {
        if r.expect_key("network")? != [name] {
            return Err(Error::parse("agent checkpoint", format!("expected network {name}")));
        }
        nets.push(Mlp::read_text(&mut r)?);
    }
    let (sd, ad) = (config.state_dim(), config.action_dim());
    for (name, net) in NETWORKS.iter().zip(&nets) {
        let (i, o) = if name.starts_with("actor") { (sd, ad) } else { (sd + ad, 1) };
        if net.input_dim() != i || net.output_dim() != o {
            return Err(Error::shape(format!("{name} {i}->{o}"), format!("{}->{}", net.input_dim(), net.output_dim())));
        }
    }
    let mut it = nets.into_iter();
    let mut next = || it.next().expect("six networks");
    let (actor, actor_target, critic1, critic2, critic1_target, critic2_target) =
        (next(), next(), next(), next(), next(), next());
    let mut agent = Td3Agent::assemble(config, hyper, actor, critic1, critic2, rng);
    agent.actor_target = actor_target;
    agent.critic1_target = critic1_target;
    agent.critic2_target = critic2_target;
    agent.exploration_steps = exploration_steps;
    agent.critic_iterations = critic_iterations;
    agent.actor_updates = actor_updates;
    Ok(agent)
}

fn parse_rng(seed: &str, stream: &str, pos: &str) -> Result<ChaCha8Rng> {
    use rand::SeedableRng;
    if seed.len() != 64 {
        return Err(Error::parse("rng state", "seed must be 64 hex digits"));
    }
    let mut bytes = [0u8; 32];
    for (i, b) in bytes.iter_mut().enumerate() {
        *b = u8::from_str_radix(&seed[2 * i..2 * i + 2], 16).map_err(|e| Error::parse("rng state", e))?;
    }
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.set_stream(stream.parse().map_err(|e| Error::parse("rng state", e))?);
    rng.set_word_pos(pos.parse().map_err(|e| Error::parse("rng state", e))?);
    Ok(rng)
}
