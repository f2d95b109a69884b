use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, Game, ScoreSplit};
use crate::error::{Error, Result};

/// TemporalG keeps both agents frozen for this many steps while items spawn.
pub const FREEZE_STEPS: usize = 6;
/// Scores are normalised by this value in the score channel.
pub const MAX_SCORE: f32 = 250.0;

pub const CODE_EMPTY: f32 = 0.0;
pub const CODE_ITEM: f32 = 1.0 / 3.0;
pub const CODE_WALL: f32 = 2.0 / 3.0;
pub const CODE_PARTNER: f32 = 1.0;

const MAX_PLACEMENT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.manhattan(other) == 1
    }

    /// Offset by `(dr, dc)` if the result stays inside `h × w`.
    pub fn offset(self, dr: isize, dc: isize, h: usize, w: usize) -> Option<Cell> {
        let r = self.row as isize + dr;
        let c = self.col as isize + dc;
        (r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w).then(|| Cell::new(r as usize, c as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
    Up,
    Down,
    Pickup,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Left, Action::Right, Action::Up, Action::Down, Action::Pickup];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Action> {
        Action::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Usage(format!("action index {i} out of range")))
    }

    fn delta(self) -> Option<(isize, isize)> {
        match self {
            Action::Left => Some((0, -1)),
            Action::Right => Some((0, 1)),
            Action::Up => Some((-1, 0)),
            Action::Down => Some((1, 0)),
            Action::Pickup => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Ongoing,
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub pos: Cell,
    /// ScoreG value; 0 in TemporalG.
    pub score: u32,
    /// TemporalG step at which the item appears; 0 in ScoreG.
    pub spawn_time: usize,
    pub alive: bool,
    pub picked_order: Option<usize>,
}

/// What one agent perceives at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// 3×3 receptive field, row-major, channels innermost.
    pub grid: Vec<f32>,
    /// `(row / (H-1), col / (W-1))`.
    pub pos: [f32; 2],
    /// Token delivered from the partner's previous message.
    pub msg_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub episode_len: usize,
    pub success: bool,
    /// Item indices in the order they were picked up.
    pub pickup_order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: [Observation; 2],
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
    pub info: StepInfo,
}

/// Full state of one Foraging Games episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    cfg: EnvConfig,
    seed: u64,
    t: usize,
    agents: [Cell; 2],
    items: [Item; 2],
    obstacles: Vec<Cell>,
    inbox: [usize; 2],
    outcome: Outcome,
    pickup_order: Vec<usize>,
}

/// Two distinct scores drawn uniformly without replacement from `split`.
pub fn sample_score_pair<G: Rng + ?Sized>(rng: &mut G, split: ScoreSplit) -> (u32, u32) {
    let pool = split.values();
    let idx = sample(rng, pool.len(), 2);
    (pool[idx.index(0)], pool[idx.index(1)])
}

/// Starts a new episode; the layout is a pure function of `(cfg, seed)`.
pub fn new_episode(cfg: &EnvConfig, seed: u64) -> Result<(World, [Observation; 2])> {
    let world = World::new(cfg, seed)?;
    let obs = [world.observe(0), world.observe(1)];
    Ok((world, obs))
}

impl World {
    pub fn new(cfg: &EnvConfig, seed: u64) -> Result<World> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut world = match cfg.game {
            Game::ScoreG => Self::layout_score(cfg, &mut rng)?,
            Game::TemporalG => Self::layout_temporal(cfg, &mut rng)?,
        };
        world.seed = seed;
        world.place_obstacles(cfg.n_obstacles, &mut rng)?;
        Ok(world)
    }

    fn empty(cfg: &EnvConfig) -> World {
        let item = Item {
            pos: Cell::new(0, 0),
            score: 0,
            spawn_time: 0,
            alive: true,
            picked_order: None,
        };
        World {
            cfg: cfg.clone(),
            seed: 0,
            t: 0,
            agents: [Cell::new(0, 0); 2],
            items: [item.clone(), item],
            obstacles: Vec::new(),
            inbox: [0; 2],
            outcome: Outcome::Ongoing,
            pickup_order: Vec::new(),
        }
    }

    fn layout_score(cfg: &EnvConfig, rng: &mut ChaCha8Rng) -> Result<World> {
        let (h, w) = (cfg.grid_h, cfg.grid_w);
        let mut world = Self::empty(cfg);
        let (s0, s1) = sample_score_pair(rng, cfg.score_split);
        world.items[0].pos = Cell::new(0, rng.random_range(0..w));
        world.items[0].score = s0;
        world.items[1].pos = Cell::new(h - 1, rng.random_range(0..w));
        world.items[1].score = s1;

        let mut taken = vec![world.items[0].pos, world.items[1].pos];
        let halves = [[0, 1], [h - 2, h - 1]];
        for (agent, rows) in halves.iter().enumerate() {
            let free: Vec<Cell> = rows
                .iter()
                .flat_map(|&r| (0..w).map(move |c| Cell::new(r, c)))
                .filter(|c| !taken.contains(c))
                .collect();
            if free.is_empty() {
                return Err(Error::Placement {
                    what: "agent",
                    attempts: 1,
                });
            }
            world.agents[agent] = free[rng.random_range(0..free.len())];
            taken.push(world.agents[agent]);
        }
        Ok(world)
    }

    fn layout_temporal(cfg: &EnvConfig, rng: &mut ChaCha8Rng) -> Result<World> {
        let (h, w) = (cfg.grid_h, cfg.grid_w);
        let center_row = h / 2;
        let mut world = Self::empty(cfg);
        let spawn = sample(rng, FREEZE_STEPS, 2);
        let cols = [0, w - 1];
        let mut taken: Vec<Cell> = Vec::new();
        for agent in 0..2 {
            let mut placed = false;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let me = Cell::new(rng.random_range(0..h), cols[agent]);
                if taken.contains(&me) {
                    continue;
                }
                let candidates: Vec<Cell> = field_cells(me, h, w)
                    .into_iter()
                    .filter(|&c| c != me && c.row != center_row && !taken.contains(&c))
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                world.agents[agent] = me;
                let item = &mut world.items[agent];
                item.pos = candidates[rng.random_range(0..candidates.len())];
                item.spawn_time = spawn.index(agent) + 1;
                taken.extend([me, item.pos]);
                placed = true;
                break;
            }
            if !placed {
                return Err(Error::Placement {
                    what: "TemporalG item",
                    attempts: MAX_PLACEMENT_ATTEMPTS,
                });
            }
        }
        Ok(world)
    }

    /// Blocks `n` random free cells of the central 3×3 region.
    pub fn place_obstacles<G: Rng + ?Sized>(&mut self, n: usize, rng: &mut G) -> Result<()> {
        if n > 4 {
            return Err(Error::Config(format!("n_obstacles must be in 0..=4, got {n}")));
        }
        if n == 0 {
            return Ok(());
        }
        let (ch, cw) = (self.cfg.grid_h / 2, self.cfg.grid_w / 2);
        let free: Vec<Cell> = (ch - 1..=ch + 1)
            .flat_map(|r| (cw - 1..=cw + 1).map(move |c| Cell::new(r, c)))
            .filter(|&c| !self.agents.contains(&c) && self.items.iter().all(|it| it.pos != c))
            .filter(|c| !self.obstacles.contains(c))
            .collect();
        if free.len() < n {
            return Err(Error::Placement {
                what: "obstacle",
                attempts: 1,
            });
        }
        for i in sample(rng, free.len(), n) {
            self.obstacles.push(free[i]);
        }
        self.obstacles.sort();
        Ok(())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn agents(&self) -> [Cell; 2] {
        self.agents
    }

    pub fn items(&self) -> &[Item; 2] {
        &self.items
    }

    pub fn obstacles(&self) -> &[Cell] {
        &self.obstacles
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn is_done(&self) -> bool {
        self.outcome != Outcome::Ongoing
    }

    pub fn inbox(&self) -> [usize; 2] {
        self.inbox
    }

    pub fn pickup_order(&self) -> &[usize] {
        &self.pickup_order
    }

    /// Item index each agent observes the score of; agent `i` owns item `i`.
    pub fn assigned_item(&self, agent: usize) -> usize {
        agent
    }

    /// Whether the item is on the board at the current step.
    pub fn item_present(&self, k: usize) -> bool {
        let it = &self.items[k];
        it.alive && (self.cfg.game == Game::ScoreG || self.t >= it.spawn_time)
    }

    /// Index of the item that must be picked up next.
    pub fn goal(&self) -> Option<usize> {
        match self.cfg.game {
            Game::ScoreG => Some(if self.items[0].score > self.items[1].score { 0 } else { 1 }),
            Game::TemporalG => (0..2)
                .filter(|&k| self.items[k].alive)
                .min_by_key(|&k| self.items[k].spawn_time),
        }
    }

    pub fn agents_adjacent(&self) -> bool {
        self.agents[0].is_adjacent(self.agents[1])
    }

    fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.cfg.grid_h && c.col < self.cfg.grid_w
    }

    fn blocks_movement(&self, c: Cell) -> bool {
        self.obstacles.contains(&c) || (0..2).any(|k| self.item_present(k) && self.items[k].pos == c)
    }

    /// Delivers each agent's token to its partner, subject to the channel rules.
    pub fn route_messages(&mut self, sent: [usize; 2]) -> Result<[usize; 2]> {
        for &tok in &sent {
            if tok >= self.cfg.vocab_size {
                return Err(Error::TokenRange {
                    token: tok,
                    vocab: self.cfg.vocab_size,
                });
            }
        }
        let open = self.cfg.communication_enabled
            && (self.cfg.game == Game::ScoreG || self.agents_adjacent());
        let delivered = if open { [sent[1], sent[0]] } else { [0, 0] };
        self.inbox = delivered;
        Ok(delivered)
    }

    pub fn observe(&self, agent: usize) -> Observation {
        let ch = self.cfg.game.channels();
        let me = self.agents[agent];
        let partner = self.agents[1 - agent];
        let mine = self.assigned_item(agent);
        let mut grid = vec![0.0f32; 9 * ch];
        for (slot, (dr, dc)) in (-1..=1).flat_map(|dr| (-1..=1).map(move |dc| (dr, dc))).enumerate() {
            let base = slot * ch;
            let Some(cell) = me.offset(dr, dc, self.cfg.grid_h, self.cfg.grid_w) else {
                grid[base] = CODE_WALL;
                continue;
            };
            if self.obstacles.contains(&cell) {
                grid[base] = CODE_WALL;
            } else if let Some(k) = (0..2).find(|&k| self.item_present(k) && self.items[k].pos == cell) {
                grid[base] = CODE_ITEM;
                if self.cfg.game == Game::ScoreG && k == mine {
                    grid[base + 1] = self.items[k].score as f32 / MAX_SCORE;
                }
            } else if cell == partner && self.cfg.partner_visible {
                grid[base] = CODE_PARTNER;
            }
        }
        let norm = |v: usize, n: usize| v as f32 / (n - 1) as f32;
        Observation {
            grid,
            pos: [norm(me.row, self.cfg.grid_h), norm(me.col, self.cfg.grid_w)],
            msg_in: self.inbox[agent],
        }
    }

    /// The item agent `a` would register a pickup on, preferring the goal.
    fn pickup_target(&self, a: usize) -> Option<usize> {
        let adjacent: Vec<usize> = (0..2)
            .filter(|&k| self.item_present(k) && self.items[k].pos.is_adjacent(self.agents[a]))
            .collect();
        match self.goal() {
            Some(g) if adjacent.contains(&g) => Some(g),
            _ => adjacent.first().copied(),
        }
    }

    pub fn step(&mut self, actions: [Action; 2]) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        self.t += 1;
        let frozen = self.cfg.game == Game::TemporalG && self.t <= FREEZE_STEPS;
        if !frozen {
            self.resolve_pickups(actions);
            if !self.is_done() {
                self.resolve_moves(actions);
            }
        }
        if !self.is_done() && self.t >= self.cfg.t_max {
            self.outcome = Outcome::Failure;
        }
        let reward = match self.outcome {
            Outcome::Ongoing => 0.0,
            Outcome::Failure => -1.0,
            Outcome::Success => {
                let t_max = self.cfg.t_max as f64;
                1.0 + (t_max - self.t as f64) / t_max
            }
        };
        Ok(StepResult {
            obs: [self.observe(0), self.observe(1)],
            reward,
            done: self.is_done(),
            outcome: self.outcome,
            info: StepInfo {
                episode_len: self.t,
                success: self.outcome == Outcome::Success,
                pickup_order: self.pickup_order.clone(),
            },
        })
    }

    fn resolve_pickups(&mut self, actions: [Action; 2]) {
        let regs: Vec<Option<usize>> = (0..2)
            .map(|a| (actions[a] == Action::Pickup).then(|| self.pickup_target(a)).flatten())
            .collect();
        if regs.iter().all(Option::is_none) {
            return;
        }
        let goal = self.goal();
        match (regs[0], regs[1]) {
            (Some(a), Some(b)) if a == b && Some(a) == goal => {
                let order = self.pickup_order.len();
                let item = &mut self.items[a];
                item.alive = false;
                item.picked_order = Some(order);
                self.pickup_order.push(a);
                let finished = match self.cfg.game {
                    Game::ScoreG => true,
                    Game::TemporalG => self.items.iter().all(|it| !it.alive),
                };
                if finished {
                    self.outcome = Outcome::Success;
                }
            }
            (Some(_), Some(_)) => self.outcome = Outcome::Failure,
            _ if self.cfg.lone_pickup_fails => self.outcome = Outcome::Failure,
            _ => {}
        }
    }

    fn resolve_moves(&mut self, actions: [Action; 2]) {
        let (h, w) = (self.cfg.grid_h, self.cfg.grid_w);
        // Phase 1: each agent proposes a target that is free of static blockers.
        let proposal: Vec<Option<Cell>> = (0..2)
            .map(|a| {
                let (dr, dc) = actions[a].delta()?;
                let target = self.agents[a].offset(dr, dc, h, w)?;
                (!self.blocks_movement(target)).then_some(target)
            })
            .collect();
        // Phase 2: commit, cancelling collisions and swaps.
        let mut next = self.agents;
        match (proposal[0], proposal[1]) {
            (Some(p0), Some(p1)) if p0 == p1 => {}
            (Some(p0), Some(p1)) if p0 == self.agents[1] && p1 == self.agents[0] => {}
            _ => {
                for a in 0..2 {
                    let Some(target) = proposal[a] else { continue };
                    let other = 1 - a;
                    if target == self.agents[other] {
                        // Allowed only if the partner vacates successfully.
                        let vacates = proposal[other].is_some_and(|p| p != self.agents[a]);
                        if !vacates {
                            continue;
                        }
                    }
                    next[a] = target;
                }
            }
        }
        debug_assert!(next[0] != next[1]);
        debug_assert!(next.iter().all(|&c| self.in_bounds(c)));
        self.agents = next;
    }
}

/// In-bounds cells of the 3×3 window centred on `c`.
pub fn field_cells(c: Cell, h: usize, w: usize) -> Vec<Cell> {
    (-1..=1)
        .flat_map(|dr| (-1..=1).map(move |dc| (dr, dc)))
        .filter_map(|(dr, dc)| c.offset(dr, dc, h, w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world_with(cfg: &EnvConfig, agents: [Cell; 2], items: [(Cell, u32, usize); 2]) -> World {
        let mut w = World::empty(cfg);
        w.agents = agents;
        for (k, (pos, score, spawn)) in items.into_iter().enumerate() {
            w.items[k].pos = pos;
            w.items[k].score = score;
            w.items[k].spawn_time = spawn;
        }
        w
    }

    #[test]
    fn same_seed_gives_identical_worlds() {
        let cfg = EnvConfig::score_g();
        assert_eq!(World::new(&cfg, 7).unwrap(), World::new(&cfg, 7).unwrap());
        let tcfg = EnvConfig::temporal_g();
        assert_eq!(World::new(&tcfg, 7).unwrap(), World::new(&tcfg, 7).unwrap());
    }

    #[test]
    fn score_layout_matches_rules() {
        let cfg = EnvConfig::score_g();
        let w = World::new(&cfg, 7).unwrap();
        let [a, b] = w.items();
        assert_ne!(a.score, b.score);
        assert!(a.score % 5 == 0 && (5..=250).contains(&a.score));
        assert_eq!(a.pos.row, 0);
        assert_eq!(b.pos.row, 4);
        assert!(w.agents()[0].row <= 1 && w.agents()[1].row >= 3);
    }

    #[test]
    fn test_split_scores_are_even_and_not_multiples_of_ten() {
        let mut cfg = EnvConfig::score_g();
        cfg.score_split = ScoreSplit::Test;
        for seed in 0..200 {
            let w = World::new(&cfg, seed).unwrap();
            for it in w.items() {
                assert!(it.score % 2 == 0 && it.score % 10 != 0, "{}", it.score);
            }
        }
    }

    #[test]
    fn wall_blocks_left_move() {
        let cfg = EnvConfig::score_g();
        let mut w = world_with(
            &cfg,
            [Cell::new(1, 0), Cell::new(3, 4)],
            [(Cell::new(0, 2), 10, 0), (Cell::new(4, 2), 20, 0)],
        );
        w.step([Action::Left, Action::Right]).unwrap();
        assert_eq!(w.agents(), [Cell::new(1, 0), Cell::new(3, 4)]);
    }

    #[test]
    fn joint_goal_pickup_pays_time_bonus() {
        let cfg = EnvConfig::score_g();
        let mut w = world_with(
            &cfg,
            [Cell::new(3, 1), Cell::new(3, 3)],
            [(Cell::new(0, 2), 10, 0), (Cell::new(4, 2), 20, 0)],
        );
        // four idle steps bumping into walls, then both step next to item 1
        for _ in 0..3 {
            let r = w.step([Action::Up, Action::Up]).unwrap();
            assert_eq!(r.reward, 0.0);
        }
        w.agents = [Cell::new(4, 1), Cell::new(4, 3)];
        w.step([Action::Left, Action::Right]).unwrap();
        w.agents = [Cell::new(4, 1), Cell::new(4, 3)];
        let r = w.step([Action::Pickup, Action::Pickup]).unwrap();
        assert_eq!(r.outcome, Outcome::Success);
        assert_eq!(r.info.episode_len, 5);
        assert!((r.reward - 1.5).abs() < 1e-12);
    }

    #[test]
    fn joint_pickup_of_low_item_fails() {
        let cfg = EnvConfig::score_g();
        let mut w = world_with(
            &cfg,
            [Cell::new(0, 1), Cell::new(0, 3)],
            [(Cell::new(0, 2), 10, 0), (Cell::new(4, 2), 20, 0)],
        );
        let r = w.step([Action::Pickup, Action::Pickup]).unwrap();
        assert_eq!(r.outcome, Outcome::Failure);
        assert_eq!(r.reward, -1.0);
        assert!(r.done);
        assert!(matches!(w.step([Action::Up, Action::Up]), Err(Error::Usage(_))));
    }

    #[test]
    fn lone_and_far_pickups_are_noops_by_default() {
        let cfg = EnvConfig::score_g();
        let mut w = world_with(
            &cfg,
            [Cell::new(1, 1), Cell::new(4, 3)],
            [(Cell::new(0, 2), 10, 0), (Cell::new(4, 2), 20, 0)],
        );
        let r = w.step([Action::Pickup, Action::Left]).unwrap();
        assert_eq!(r.outcome, Outcome::Ongoing);
        let r = w.step([Action::Up, Action::Pickup]).unwrap();
        assert_eq!(r.outcome, Outcome::Ongoing);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn lone_pickup_fails_when_configured() {
        let mut cfg = EnvConfig::score_g();
        cfg.lone_pickup_fails = true;
        let mut w = world_with(
            &cfg,
            [Cell::new(1, 1), Cell::new(4, 3)],
            [(Cell::new(0, 2), 10, 0), (Cell::new(4, 2), 20, 0)],
        );
        let r = w.step([Action::Pickup, Action::Left]).unwrap();
        assert_eq!(r.outcome, Outcome::Ongoing);
        let r = w.step([Action::Up, Action::Pickup]).unwrap();
        assert_eq!(r.outcome, Outcome::Failure);
    }

    #[test]
    fn split_joint_pickup_fails() {
        let cfg = EnvConfig::score_g();
        let mut w = world_with(
            &cfg,
            [Cell::new(0, 1), Cell::new(4, 3)],
            [(Cell::new(0, 2), 10, 0), (Cell::new(4, 2), 20, 0)],
        );
        let r = w.step([Action::Pickup, Action::Pickup]).unwrap();
        assert_eq!(r.outcome, Outcome::Failure);
    }

    #[test]
    fn collisions_and_swaps_cancel() {
        let cfg = EnvConfig::score_g();
        let items = [(Cell::new(0, 0), 10, 0), (Cell::new(4, 4), 20, 0)];
        let mut w = world_with(&cfg, [Cell::new(2, 1), Cell::new(2, 3)], items);
        w.step([Action::Right, Action::Left]).unwrap();
        assert_eq!(w.agents(), [Cell::new(2, 1), Cell::new(2, 3)]);

        let mut w = world_with(&cfg, [Cell::new(2, 1), Cell::new(2, 2)], items);
        w.step([Action::Right, Action::Left]).unwrap();
        assert_eq!(w.agents(), [Cell::new(2, 1), Cell::new(2, 2)]);

        // following into a vacated cell works
        let mut w = world_with(&cfg, [Cell::new(2, 1), Cell::new(2, 2)], items);
        w.step([Action::Right, Action::Right]).unwrap();
        assert_eq!(w.agents(), [Cell::new(2, 2), Cell::new(2, 3)]);

        // but not when the leader is blocked
        let mut w = world_with(&cfg, [Cell::new(2, 3), Cell::new(2, 4)], items);
        w.step([Action::Right, Action::Right]).unwrap();
        assert_eq!(w.agents(), [Cell::new(2, 3), Cell::new(2, 4)]);
    }

    #[test]
    fn timeout_fails() {
        let cfg = EnvConfig::score_g();
        let mut w = world_with(
            &cfg,
            [Cell::new(1, 0), Cell::new(3, 4)],
            [(Cell::new(0, 2), 10, 0), (Cell::new(4, 2), 20, 0)],
        );
        for t in 1..=10 {
            let r = w.step([Action::Left, Action::Right]).unwrap();
            assert_eq!(r.done, t == 10);
        }
        assert_eq!(w.outcome(), Outcome::Failure);
    }

    #[test]
    fn message_routing() {
        let cfg = EnvConfig::score_g();
        let mut w = World::new(&cfg, 1).unwrap();
        assert_eq!(w.route_messages([3, 1]).unwrap(), [1, 3]);
        assert_eq!(w.observe(0).msg_in, 1);
        assert!(w.route_messages([4, 0]).is_err());

        let tcfg = EnvConfig::temporal_g();
        let items = [(Cell::new(0, 0), 0, 1), (Cell::new(4, 0), 0, 2)];
        let mut w = world_with(&tcfg, [Cell::new(2, 1), Cell::new(2, 2)], items);
        assert_eq!(w.route_messages([2, 0]).unwrap(), [0, 2]);
        let mut w = world_with(&tcfg, [Cell::new(0, 1), Cell::new(4, 4)], items);
        assert_eq!(w.route_messages([3, 3]).unwrap(), [0, 0]);

        let mut mute = EnvConfig::score_g();
        mute.communication_enabled = false;
        let mut w = World::new(&mute, 1).unwrap();
        assert_eq!(w.route_messages([3, 2]).unwrap(), [0, 0]);
    }

    #[test]
    fn corner_observation_sees_five_walls() {
        let cfg = EnvConfig::score_g();
        let w = world_with(
            &cfg,
            [Cell::new(4, 4), Cell::new(0, 0)],
            [(Cell::new(0, 2), 250, 0), (Cell::new(4, 2), 20, 0)],
        );
        let obs = w.observe(0);
        let walls = obs.grid.chunks(2).filter(|c| c[0] == CODE_WALL).count();
        assert_eq!(walls, 5);
        assert_eq!(obs.pos, [1.0, 1.0]);
    }

    #[test]
    fn score_channel_only_shows_assigned_item() {
        let cfg = EnvConfig::score_g();
        let w = world_with(
            &cfg,
            [Cell::new(1, 2), Cell::new(3, 2)],
            [(Cell::new(0, 2), 250, 0), (Cell::new(4, 2), 20, 0)],
        );
        // agent 0: item 0 directly above, slot 1
        let o0 = w.observe(0);
        assert_eq!(o0.grid[2], CODE_ITEM);
        assert_eq!(o0.grid[3], 1.0);
        // agent 1 sees item 1 below (slot 7) with its score; item 0 is out of view
        let o1 = w.observe(1);
        assert_eq!(o1.grid[14], CODE_ITEM);
        assert!((o1.grid[15] - 20.0 / 250.0).abs() < 1e-7);
    }

    #[test]
    fn partner_invisible_unless_configured() {
        let mut cfg = EnvConfig::score_g();
        let agents = [Cell::new(2, 1), Cell::new(2, 2)];
        let items = [(Cell::new(0, 0), 10, 0), (Cell::new(4, 4), 20, 0)];
        let w = world_with(&cfg, agents, items);
        assert_eq!(w.observe(0).grid[5 * 2], CODE_EMPTY);
        cfg.partner_visible = true;
        let w = world_with(&cfg, agents, items);
        assert_eq!(w.observe(0).grid[5 * 2], CODE_PARTNER);
    }

    #[test]
    fn temporal_items_spawn_in_owner_field() {
        let cfg = EnvConfig::temporal_g();
        for seed in 0..500 {
            let w = World::new(&cfg, seed).unwrap();
            let [a0, a1] = w.agents();
            assert_eq!((a0.col, a1.col), (0, 4));
            let its = w.items();
            assert_ne!(its[0].spawn_time, its[1].spawn_time);
            for (k, it) in its.iter().enumerate() {
                assert!((1..=6).contains(&it.spawn_time));
                assert_ne!(it.pos.row, 2);
                assert!(field_cells(w.agents()[k], 5, 5).contains(&it.pos));
            }
        }
    }

    #[test]
    fn temporal_freeze_and_order() {
        let cfg = EnvConfig::temporal_g();
        let mut w = world_with(
            &cfg,
            [Cell::new(1, 1), Cell::new(1, 3)],
            [(Cell::new(1, 2), 0, 4), (Cell::new(3, 2), 0, 2)],
        );
        for _ in 0..FREEZE_STEPS {
            w.step([Action::Down, Action::Pickup]).unwrap();
            assert_eq!(w.agents(), [Cell::new(1, 1), Cell::new(1, 3)]);
        }
        // item 1 spawned first: picking item 0 now is a failure
        let mut early = w.clone();
        let r = early.step([Action::Pickup, Action::Pickup]).unwrap();
        assert_eq!(r.outcome, Outcome::Failure);

        w.agents = [Cell::new(2, 2), Cell::new(3, 3)];
        let r = w.step([Action::Pickup, Action::Pickup]).unwrap();
        assert_eq!(r.outcome, Outcome::Ongoing);
        assert_eq!(w.pickup_order(), &[1]);
        w.agents = [Cell::new(1, 1), Cell::new(1, 3)];
        let r = w.step([Action::Pickup, Action::Pickup]).unwrap();
        assert_eq!(r.outcome, Outcome::Success);
        assert_eq!(r.info.pickup_order, vec![1, 0]);
        assert!((r.reward - (1.0 + 12.0 / 20.0)).abs() < 1e-12);
    }

    #[test]
    fn obstacles_stay_central_and_block() {
        let mut cfg = EnvConfig::score_g();
        cfg.n_obstacles = 4;
        let w = World::new(&cfg, 3).unwrap();
        assert_eq!(w.obstacles().len(), 4);
        for c in w.obstacles() {
            assert!((1..=3).contains(&c.row) && (1..=3).contains(&c.col));
        }
        let mut w0 = World::new(&EnvConfig::score_g(), 3).unwrap();
        assert!(w0.place_obstacles(5, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let before = w0.clone();
        w0.place_obstacles(0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(w0, before);
    }

    #[test]
    fn score_pair_train_frequencies_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pool = ScoreSplit::Train.values();
        let mut counts = vec![0usize; 251];
        let n = 1_000_000;
        for _ in 0..n / 2 {
            let (a, b) = sample_score_pair(&mut rng, ScoreSplit::Train);
            assert_ne!(a, b);
            counts[a as usize] += 1;
            counts[b as usize] += 1;
        }
        for v in pool {
            let f = counts[v as usize] as f64 / n as f64;
            assert!((f - 0.02).abs() < 0.002, "{v}: {f}");
        }
    }
}
