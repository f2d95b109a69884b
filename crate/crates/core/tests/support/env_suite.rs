//! Random-policy episodes checked step by step against the world rules.

use foraging::env::{
    field_cells, Action, Cell, EnvConfig, Game, Observation, Outcome, World, CODE_ITEM, FREEZE_STEPS, MAX_SCORE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Default, Clone, Copy)]
pub struct SuiteStats {
    pub episodes: usize,
    pub steps: usize,
    pub successes: usize,
    pub timeouts: usize,
    pub pickup_failures: usize,
}

/// Configurations the suite cycles through for a game.
pub fn variants(game: Game) -> Vec<EnvConfig> {
    let base = EnvConfig::new(game);
    let mut out = vec![base.clone()];
    let mut v = base.clone();
    v.n_obstacles = if game == Game::ScoreG { 4 } else { 2 };
    out.push(v);
    let mut v = base.clone();
    v.lone_pickup_fails = true;
    v.partner_visible = true;
    out.push(v);
    let mut v = base.clone();
    v.grid_h = 7;
    v.grid_w = 7;
    v.n_obstacles = 1;
    out.push(v);
    let mut v = base;
    v.grid_h = 3;
    v.grid_w = 3;
    v.communication_enabled = false;
    out.push(v);
    out
}

fn check_layout(w: &World) -> Result<(), String> {
    let cfg = w.config();
    let (h, wd) = (cfg.grid_h, cfg.grid_w);
    let [a0, a1] = w.agents();
    let items = w.items();
    if a0 == a1 {
        return Err("agents start on one cell".into());
    }
    match cfg.game {
        Game::ScoreG => {
            if items[0].pos.row != 0 || items[1].pos.row != h - 1 {
                return Err(format!("items not on the top and bottom rows: {items:?}"));
            }
            let pool = cfg.score_split.values();
            if items[0].score == items[1].score || !items.iter().all(|it| pool.contains(&it.score)) {
                return Err(format!("bad scores {} {}", items[0].score, items[1].score));
            }
            if a0.row > 1 || a1.row < h - 2 {
                return Err(format!("agents outside their halves: {a0:?} {a1:?}"));
            }
        }
        Game::TemporalG => {
            if a0.col != 0 || a1.col != wd - 1 {
                return Err(format!("agents not on the side columns: {a0:?} {a1:?}"));
            }
            for (k, me) in [a0, a1].into_iter().enumerate() {
                let it = &items[k];
                if !field_cells(me, h, wd).contains(&it.pos) || it.pos == me || it.pos.row == h / 2 {
                    return Err(format!("item {k} at {:?} not placed in agent {k}'s field", it.pos));
                }
                if !(1..=FREEZE_STEPS).contains(&it.spawn_time) {
                    return Err(format!("spawn time {} out of range", it.spawn_time));
                }
            }
            if items[0].spawn_time == items[1].spawn_time {
                return Err("items spawn together".into());
            }
        }
    }
    let mut taken: Vec<Cell> = vec![a0, a1, items[0].pos, items[1].pos];
    taken.extend_from_slice(w.obstacles());
    let n = taken.len();
    taken.sort();
    taken.dedup();
    if taken.len() != n {
        return Err("layout cells overlap".into());
    }
    if w.obstacles().len() != cfg.n_obstacles {
        return Err("wrong obstacle count".into());
    }
    Ok(())
}

fn check_occupancy(w: &World) -> Result<(), String> {
    let cfg = w.config();
    let [a0, a1] = w.agents();
    if a0 == a1 {
        return Err(format!("agents share {a0:?} at t={}", w.t()));
    }
    for a in [a0, a1] {
        if a.row >= cfg.grid_h || a.col >= cfg.grid_w {
            return Err(format!("agent out of bounds at {a:?}"));
        }
        if w.obstacles().contains(&a) {
            return Err(format!("agent on obstacle {a:?}"));
        }
        if (0..2).any(|k| w.item_present(k) && w.items()[k].pos == a) {
            return Err(format!("agent on an item at {a:?}"));
        }
    }
    Ok(())
}

/// Checks what an observation shows against the true world state.
fn check_obs(w: &World, agent: usize, o: &Observation) -> Result<(), String> {
    let cfg = w.config();
    let ch = cfg.game.channels();
    let me = w.agents()[agent];
    for (slot, (dr, dc)) in (-1..=1isize).flat_map(|dr| (-1..=1isize).map(move |dc| (dr, dc))).enumerate() {
        let Some(cell) = me.offset(dr, dc, cfg.grid_h, cfg.grid_w) else { continue };
        let item = (0..2).find(|&k| w.items()[k].pos == cell);
        let shows_item = o.grid[slot * ch] == CODE_ITEM;
        let present = item.is_some_and(|k| w.item_present(k));
        if shows_item != present {
            return Err(format!("agent {agent} sees item={shows_item} at {cell:?}, present={present}, t={}", w.t()));
        }
        if shows_item && cfg.game == Game::TemporalG && item.is_some_and(|k| w.t() < w.items()[k].spawn_time) {
            return Err("item visible before spawning".into());
        }
        if cfg.game == Game::ScoreG {
            let want = match item {
                Some(k) if present && k == agent => w.items()[k].score as f32 / MAX_SCORE,
                _ => 0.0,
            };
            if o.grid[slot * ch + 1] != want {
                return Err(format!("score channel {} != {want} at {cell:?}", o.grid[slot * ch + 1]));
            }
        }
    }
    Ok(())
}

pub type History = Vec<([Action; 2], [usize; 2])>;

/// One random-policy episode; returns the action and token history.
pub fn run_episode(cfg: &EnvConfig, seed: u64, stats: &mut SuiteStats) -> Result<History, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xac71);
    let mut w = World::new(cfg, seed).map_err(|e| e.to_string())?;
    check_layout(&w)?;
    check_occupancy(&w)?;
    let (items0, obstacles0) = (w.items().clone(), w.obstacles().to_vec());
    let mut history = Vec::new();
    loop {
        // Bias towards pickups so joint pickups happen often enough to test.
        let act = |rng: &mut ChaCha8Rng| {
            if rng.random_bool(0.3) { Action::Pickup } else { Action::ALL[rng.random_range(0..4)] }
        };
        let actions = [act(&mut rng), act(&mut rng)];
        let tokens = [rng.random_range(0..cfg.vocab_size), rng.random_range(0..cfg.vocab_size)];
        let before = w.clone();
        let delivered = w.route_messages(tokens).map_err(|e| e.to_string())?;
        let open = cfg.communication_enabled && (cfg.game == Game::ScoreG || before.agents_adjacent());
        let want = if open { [tokens[1], tokens[0]] } else { [0, 0] };
        if delivered != want {
            return Err(format!("delivered {delivered:?}, expected {want:?}"));
        }
        let r = w.step(actions).map_err(|e| e.to_string())?;
        history.push((actions, tokens));
        stats.steps += 1;
        let t = w.t();
        check_occupancy(&w)?;
        for a in 0..2 {
            if w.agents()[a].manhattan(before.agents()[a]) > 1 {
                return Err(format!("agent {a} jumped"));
            }
            check_obs(&w, a, &r.obs[a])?;
            if r.obs[a].msg_in != delivered[a] {
                return Err("observation carries the wrong token".into());
            }
        }
        if w.obstacles() != obstacles0.as_slice() || (0..2).any(|k| w.items()[k].pos != items0[k].pos) {
            return Err("static layout changed".into());
        }
        let frozen = cfg.game == Game::TemporalG && t <= FREEZE_STEPS;
        if frozen && (w.agents() != before.agents() || r.outcome != Outcome::Ongoing) {
            return Err(format!("state changed during the freeze at t={t}"));
        }
        let both_on_goal = (0..2).all(|a| {
            actions[a] == Action::Pickup
                && before.goal().is_some_and(|g| before.item_present(g) && before.items()[g].pos.is_adjacent(before.agents()[a]))
        });
        let picked = w.pickup_order().len() > before.pickup_order().len();
        if picked && (frozen || !both_on_goal) {
            return Err(format!("item removed without a joint goal pickup at t={t}"));
        }
        if r.done != (r.outcome != Outcome::Ongoing) || t > cfg.t_max {
            return Err("done flag disagrees with the outcome".into());
        }
        let t_max = cfg.t_max as f64;
        let expected = match r.outcome {
            Outcome::Ongoing => 0.0,
            Outcome::Failure => -1.0,
            Outcome::Success => 1.0 + (t_max - t as f64) / t_max,
        };
        if r.reward != expected {
            return Err(format!("reward {} for {:?} at t={t}", r.reward, r.outcome));
        }
        if r.info.episode_len != t || r.info.success != (r.outcome == Outcome::Success) {
            return Err("step info disagrees with the world".into());
        }
        if r.done {
            match r.outcome {
                Outcome::Success => {
                    if !both_on_goal {
                        return Err("success without a joint goal pickup".into());
                    }
                    stats.successes += 1;
                }
                _ if t == cfg.t_max => stats.timeouts += 1,
                _ => {
                    let regs = actions.iter().filter(|&&a| a == Action::Pickup).count();
                    if regs == 0 || (regs == 1 && !cfg.lone_pickup_fails) {
                        return Err(format!("early failure at t={t} without a failing pickup"));
                    }
                    stats.pickup_failures += 1;
                }
            }
            stats.episodes += 1;
            return Ok(history);
        }
    }
}

/// Replays `history` from `seed` and demands bit-identical observations.
pub fn replay_matches(cfg: &EnvConfig, seed: u64, history: &[([Action; 2], [usize; 2])]) -> Result<(), String> {
    let run = || -> Result<(World, Vec<u32>), String> {
        let mut w = World::new(cfg, seed).map_err(|e| e.to_string())?;
        let mut bits = Vec::new();
        for (actions, tokens) in history {
            w.route_messages(*tokens).map_err(|e| e.to_string())?;
            let r = w.step(*actions).map_err(|e| e.to_string())?;
            for o in &r.obs {
                bits.extend(o.grid.iter().chain(&o.pos).map(|x| x.to_bits()));
                bits.push(o.msg_in as u32);
            }
            bits.push(r.reward.to_bits() as u32);
        }
        Ok((w, bits))
    };
    let (a, b) = (run()?, run()?);
    if a != b {
        return Err(format!("replay of seed {seed} diverged"));
    }
    Ok(())
}

/// `n` episodes spread over the suite's configurations for `game`, every one
/// replayed for determinism.
pub fn run_suite(game: Game, n: usize, seed: u64) -> Result<SuiteStats, String> {
    let configs = variants(game);
    let mut stats = SuiteStats::default();
    for i in 0..n {
        let cfg = &configs[i % configs.len()];
        let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let history = run_episode(cfg, s, &mut stats).map_err(|e| format!("{game} seed {s}: {e}"))?;
        replay_matches(cfg, s, &history)?;
    }
    Ok(stats)
}
