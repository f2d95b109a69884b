use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Game;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TopologyKind {
    FullyConnected,
    Ring,
}

/// Who may be paired with whom during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    pub kind: TopologyKind,
    pub n_pop: usize,
}

impl Topology {
    pub fn new(kind: TopologyKind, n_pop: usize) -> Result<Self> {
        let min = match kind {
            TopologyKind::FullyConnected => 2,
            TopologyKind::Ring => 3,
        };
        if n_pop < min {
            return Err(Error::Config(format!("{kind:?} needs at least {min} agents, got {n_pop}")));
        }
        Ok(Topology { kind, n_pop })
    }

    pub fn fully_connected(n_pop: usize) -> Result<Self> {
        Self::new(TopologyKind::FullyConnected, n_pop)
    }

    pub fn ring(n_pop: usize) -> Result<Self> {
        Self::new(TopologyKind::Ring, n_pop)
    }

    /// Whether two distinct agents are neighbours.
    pub fn connected(&self, i: usize, j: usize) -> bool {
        if i == j || i >= self.n_pop || j >= self.n_pop {
            return false;
        }
        match self.kind {
            TopologyKind::FullyConnected => true,
            TopologyKind::Ring => (i + 1) % self.n_pop == j || (j + 1) % self.n_pop == i,
        }
    }

    /// Shortest hop count around the ring (1 for any FC pair, 0 for self).
    pub fn distance(&self, i: usize, j: usize) -> usize {
        if i == j {
            return 0;
        }
        match self.kind {
            TopologyKind::FullyConnected => 1,
            TopologyKind::Ring => {
                let d = i.abs_diff(j);
                d.min(self.n_pop - d)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Cross-play only: two distinct agents.
    XP,
    /// Cross-play plus self-play: an agent may also face a copy of itself.
    XPSP,
}

impl Regime {
    pub fn allows(self, topo: &Topology, pair: [usize; 2]) -> bool {
        let [i, j] = pair;
        if i == j {
            return self == Regime::XPSP && i < topo.n_pop;
        }
        topo.connected(i, j)
    }
}

/// Every ordered `[body0, body1]` assignment the regime may draw.
pub fn allowed_pairs(topo: &Topology, regime: Regime) -> Vec<[usize; 2]> {
    let n = topo.n_pop;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| [i, j]))
        .filter(|&p| regime.allows(topo, p))
        .collect()
}

/// Uniform draw over [`allowed_pairs`].
pub fn sample_pairing<G: Rng + ?Sized>(topo: &Topology, regime: Regime, rng: &mut G) -> [usize; 2] {
    let pairs = allowed_pairs(topo, regime);
    pairs[rng.random_range(0..pairs.len())]
}

/// `[game]-P[n]-[FC|Ring]-[XP|XP+SP]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentName {
    pub game: Game,
    pub topology: Topology,
    pub regime: Regime,
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let topo = match self.topology.kind {
            TopologyKind::FullyConnected => "FC",
            TopologyKind::Ring => "Ring",
        };
        let regime = match self.regime {
            Regime::XP => "XP",
            Regime::XPSP => "XP+SP",
        };
        write!(f, "{}-P{}-{topo}-{regime}", self.game, self.topology.n_pop)
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("experiment name `{s}` is not [game]-P[n]-[FC|Ring]-[XP|XP+SP]"));
        let parts: Vec<&str> = s.split('-').collect();
        let [game, pop, topo, regime] = parts[..] else {
            return Err(bad());
        };
        let n_pop: usize = pop.strip_prefix('P').and_then(|n| n.parse().ok()).ok_or_else(bad)?;
        let kind = match topo {
            "FC" => TopologyKind::FullyConnected,
            "Ring" => TopologyKind::Ring,
            _ => return Err(bad()),
        };
        let regime = match regime {
            "XP" => Regime::XP,
            "XP+SP" => Regime::XPSP,
            _ => return Err(bad()),
        };
        Ok(ExperimentName {
            game: game.parse()?,
            topology: Topology::new(kind, n_pop)?,
            regime,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn freqs(topo: &Topology, regime: Regime, draws: usize, seed: u64) -> BTreeMap<[usize; 2], f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(sample_pairing(topo, regime, &mut rng)).or_insert(0.0) += 1.0;
        }
        counts.values_mut().for_each(|c| *c /= draws as f64);
        counts
    }

    #[test]
    fn fc_xp_two_agents() {
        let topo = Topology::fully_connected(2).unwrap();
        assert_eq!(allowed_pairs(&topo, Regime::XP), vec![[0, 1], [1, 0]]);
    }

    #[test]
    fn ring_never_pairs_distant_agents() {
        let topo = Topology::ring(15).unwrap();
        let f = freqs(&topo, Regime::XPSP, 100_000, 1);
        assert!(!f.contains_key(&[0, 7]) && !f.contains_key(&[7, 0]));
        assert!(f.keys().all(|&p| Regime::XPSP.allows(&topo, p)));
        assert_eq!(allowed_pairs(&topo, Regime::XP).len(), 30);
        assert!(Topology::ring(2).is_err());
    }

    #[test]
    fn xpsp_self_share_follows_union_size() {
        // n=2: 2 cross + 2 self ordered pairs; n=3: 6 cross + 3 self.
        for (n, want) in [(2, 2.0 / 4.0), (3, 3.0 / 9.0)] {
            let topo = Topology::fully_connected(n).unwrap();
            let f = freqs(&topo, Regime::XPSP, 100_000, n as u64);
            let self_share: f64 = f.iter().filter(|(p, _)| p[0] == p[1]).map(|(_, v)| v).sum();
            assert!((self_share - want).abs() < 0.01, "n={n}: {self_share}");
        }
    }

    #[test]
    fn draws_are_uniform_per_pair() {
        for (topo, regime) in [
            (Topology::fully_connected(3).unwrap(), Regime::XP),
            (Topology::ring(5).unwrap(), Regime::XPSP),
        ] {
            let pairs = allowed_pairs(&topo, regime);
            let f = freqs(&topo, regime, 200_000, 9);
            let want = 1.0 / pairs.len() as f64;
            for p in pairs {
                assert!((f[&p] - want).abs() < 0.01, "{p:?}: {}", f[&p]);
            }
        }
    }

    #[test]
    fn ring_distance_wraps() {
        let topo = Topology::ring(15).unwrap();
        assert_eq!(topo.distance(0, 14), 1);
        assert_eq!(topo.distance(0, 7), 7);
        assert_eq!(topo.distance(3, 3), 0);
    }

    #[test]
    fn name_round_trips() {
        let n: ExperimentName = "ScoreG-P15-Ring-XP+SP".parse().unwrap();
        assert_eq!(n.topology, Topology::ring(15).unwrap());
        assert_eq!(n.regime, Regime::XPSP);
        assert_eq!(n.to_string(), "ScoreG-P15-Ring-XP+SP");
        assert!("ScoreG-P15-Star-XP".parse::<ExperimentName>().is_err());
        assert!("ScoreG-15-FC-XP".parse::<ExperimentName>().is_err());
    }

    proptest! {
        #[test]
        fn any_valid_name_round_trips(n in 3usize..40, ring in any::<bool>(), sp in any::<bool>(), tg in any::<bool>()) {
            let name = ExperimentName {
                game: if tg { Game::TemporalG } else { Game::ScoreG },
                topology: Topology::new(if ring { TopologyKind::Ring } else { TopologyKind::FullyConnected }, n).unwrap(),
                regime: if sp { Regime::XPSP } else { Regime::XP },
            };
            prop_assert_eq!(name.to_string().parse::<ExperimentName>().unwrap(), name);
        }
    }
}
