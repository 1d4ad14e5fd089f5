//! Interaction logs and their conversion into logic expressions.
//!
//! Raw (user, item, rating, timestamp) records are binarized at rating ≥ 4,
//! split per user in leave-one-out fashion, and each positive interaction
//! becomes one training/evaluation instance: the user's recent history as
//! literals (negated when disliked), each conjoined with the target item and
//! joined by disjunctions.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use crate::logic::Expr;
use crate::seeds;
use crate::{Error, Result, Split};

/// One raw record with ids already remapped to dense indices.
#[derive(Clone, Copy, Debug)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub time: i64,
}

/// A full dataset in dense id space, with the raw-id tables kept around.
#[derive(Clone, Debug)]
pub struct InteractionLog {
    records: Vec<Interaction>,
    users: Vec<String>,
    items: Vec<String>,
}

impl InteractionLog {
    pub fn records(&self) -> &[Interaction] {
        &self.records
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn item_names(&self) -> &[String] {
        &self.items
    }
}

fn parse_log(path: &Path, sep: char) -> Result<InteractionLog> {
    let file = std::fs::File::open(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        line: 0,
        message: format!("cannot open: {e}"),
    })?;
    let mut records = Vec::new();
    let mut users = Vec::new();
    let mut items = Vec::new();
    let mut user_ix: HashMap<String, u32> = HashMap::new();
    let mut item_ix: HashMap<String, u32> = HashMap::new();
    for (ix, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let data_err = |message: String| Error::Data {
            path: path.to_path_buf(),
            line: ix + 1,
            message,
        };
        let fields: Vec<&str> = line.split(sep).collect();
        if fields.len() != 4 {
            return Err(data_err(format!(
                "expected 4 fields separated by {sep:?}, found {}",
                fields.len()
            )));
        }
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| data_err(format!("bad rating {:?}", fields[2])))?;
        if !(1.0..=5.0).contains(&rating) {
            return Err(data_err(format!("rating {rating} outside 1..=5")));
        }
        let time: i64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| data_err(format!("bad timestamp {:?}", fields[3])))?;
        let user = *user_ix.entry(fields[0].to_string()).or_insert_with(|| {
            users.push(fields[0].to_string());
            (users.len() - 1) as u32
        });
        let item = *item_ix.entry(fields[1].to_string()).or_insert_with(|| {
            items.push(fields[1].to_string());
            (items.len() - 1) as u32
        });
        records.push(Interaction {
            user,
            item,
            rating,
            time,
        });
    }
    Ok(InteractionLog {
        records,
        users,
        items,
    })
}

/// Loads the tab-separated `user \t item \t rating \t timestamp` format.
pub fn load_ml100k(path: &Path) -> Result<InteractionLog> {
    parse_log(path, '\t')
}

/// Loads the comma-separated `user,item,rating,timestamp` format.
pub fn load_amazon_csv(path: &Path) -> Result<InteractionLog> {
    parse_log(path, ',')
}

/// A rating collapsed to like/dislike at the ≥ 4 threshold.
#[derive(Clone, Copy, Debug)]
pub struct BinarizedEvent {
    pub user: u32,
    pub item: u32,
    pub like: bool,
    pub time: i64,
}

pub fn binarize(log: &InteractionLog) -> Vec<BinarizedEvent> {
    log.records()
        .iter()
        .map(|r| BinarizedEvent {
            user: r.user,
            item: r.item,
            like: r.rating >= 4.0,
            time: r.time,
        })
        .collect()
}

/// One positive interaction as a prediction target with its preceding
/// context.
#[derive(Clone, Debug)]
pub struct RecInstance {
    pub user: u32,
    pub target: u32,
    /// Up to `history_len` most recent interactions before the target,
    /// oldest first; the flag is the like/dislike polarity.
    pub history: Vec<(u32, bool)>,
    pub split: Split,
}

/// Dense item index ↔ raw id table, persisted next to checkpoints so a saved
/// model can be probed with raw ids later.
#[derive(Clone, Debug)]
pub struct ItemMap {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl ItemMap {
    pub fn from_names(names: Vec<String>) -> ItemMap {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        ItemMap { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, ix: u32) -> &str {
        &self.names[ix as usize]
    }

    pub fn resolve(&self, raw: &str) -> Result<u32> {
        self.index
            .get(raw)
            .copied()
            .ok_or_else(|| Error::UnknownItem(raw.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (ix, name) in self.names.iter().enumerate() {
            out.push_str(&format!("{ix}\t{name}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ItemMap> {
        let text = std::fs::read_to_string(path)?;
        let mut names = Vec::new();
        for (ix, line) in text.lines().enumerate() {
            let data_err = |message: String| Error::Data {
                path: path.to_path_buf(),
                line: ix + 1,
                message,
            };
            let (id, name) = line
                .split_once('\t')
                .ok_or_else(|| data_err("expected `index \\t raw id`".into()))?;
            let id: usize = id
                .parse()
                .map_err(|_| data_err(format!("bad index {id:?}")))?;
            if id != ix {
                return Err(data_err(format!("index {id} out of order, expected {ix}")));
            }
            names.push(name.to_string());
        }
        Ok(ItemMap::from_names(names))
    }
}

/// Instances plus everything needed to sample negatives for them.
#[derive(Clone, Debug)]
pub struct RecDataset {
    items: ItemMap,
    n_users: usize,
    instances: Vec<RecInstance>,
    /// Per user, the set of items they like anywhere in the log; its
    /// complement is the negative pool.
    liked: Vec<HashSet<u32>>,
}

/// How many eval negatives accompany each positive.
pub const EVAL_NEGATIVES: usize = 100;

impl RecDataset {
    /// Binarizes and splits a log. `history_len` caps the context window;
    /// with `negative_history` off, disliked interactions are dropped from
    /// histories (they are never prediction targets either way).
    pub fn build(log: &InteractionLog, history_len: usize, negative_history: bool) -> RecDataset {
        let events = binarize(log);
        let instances =
            split_leave_one_out(&events, log.n_users(), history_len, negative_history);
        let mut liked: Vec<HashSet<u32>> = vec![HashSet::new(); log.n_users()];
        for e in &events {
            if e.like {
                liked[e.user as usize].insert(e.item);
            }
        }
        RecDataset {
            items: ItemMap::from_names(log.item_names().to_vec()),
            n_users: log.n_users(),
            instances,
            liked,
        }
    }

    pub fn items(&self) -> &ItemMap {
        &self.items
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn instances(&self) -> &[RecInstance] {
        &self.instances
    }

    /// Items the user ever rated positively (the negative-sampling exclusion set).
    pub fn liked(&self, user: u32) -> &HashSet<u32> {
        &self.liked[user as usize]
    }

    /// Indices of instances belonging to one split.
    pub fn split_ixs(&self, which: Split) -> Vec<usize> {
        self.instances
            .iter()
            .enumerate()
            .filter(|(_, inst)| inst.split == which)
            .map(|(ix, _)| ix)
            .collect()
    }

    /// Uniformly samples an item the user dislikes or never interacted with.
    pub fn sample_negative(&self, user: u32, rng: &mut impl Rng) -> Result<u32> {
        let liked = &self.liked[user as usize];
        if liked.len() >= self.n_items() {
            return Err(Error::EmptyNegativePool(user));
        }
        loop {
            let item = rng.random_range(0..self.n_items() as u32);
            if !liked.contains(&item) {
                return Ok(item);
            }
        }
    }

    /// The fixed evaluation slate for one instance: the positive followed by
    /// 100 distinct negatives. Depends only on the seed and the instance
    /// index, so every evaluation of a run sees identical candidates.
    pub fn eval_candidates(&self, instance_ix: usize, master_seed: u64) -> Result<Vec<u32>> {
        let inst = &self.instances[instance_ix];
        let liked = &self.liked[inst.user as usize];
        if self.n_items() - liked.len() < EVAL_NEGATIVES {
            return Err(Error::EmptyNegativePool(inst.user));
        }
        let mut rng = seeds::rng(master_seed, seeds::EVAL, &[instance_ix as u64]);
        let mut candidates = Vec::with_capacity(EVAL_NEGATIVES + 1);
        candidates.push(inst.target);
        let mut seen = HashSet::new();
        while candidates.len() < EVAL_NEGATIVES + 1 {
            let item = self.sample_negative(inst.user, &mut rng)?;
            if seen.insert(item) {
                candidates.push(item);
            }
        }
        Ok(candidates)
    }
}

/// Orders each user's events by time (ties keep input order), then emits one
/// instance per positive: a user's first five positives always train; with
/// six positives the last one tests; from seven on, the last tests and the
/// second-to-last validates.
pub fn split_leave_one_out(
    events: &[BinarizedEvent],
    n_users: usize,
    history_len: usize,
    negative_history: bool,
) -> Vec<RecInstance> {
    let mut per_user: Vec<Vec<&BinarizedEvent>> = vec![Vec::new(); n_users];
    for e in events {
        per_user[e.user as usize].push(e);
    }
    let mut instances = Vec::new();
    for user_events in &mut per_user {
        user_events.sort_by_key(|e| e.time);
        let positives: Vec<usize> = user_events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.like)
            .map(|(ix, _)| ix)
            .collect();
        let np = positives.len();
        for (ordinal, &pos_ix) in positives.iter().enumerate() {
            let split = if ordinal < 5 || np <= 5 {
                Split::Train
            } else if ordinal == np - 1 {
                Split::Test
            } else if ordinal == np - 2 && np >= 7 {
                Split::Valid
            } else {
                Split::Train
            };
            let target = user_events[pos_ix];
            let mut prior: Vec<(u32, bool)> = user_events[..pos_ix]
                .iter()
                .filter(|e| e.like || negative_history)
                .map(|e| (e.item, e.like))
                .collect();
            let history = prior.split_off(prior.len().saturating_sub(history_len));
            instances.push(RecInstance {
                user: target.user,
                target: target.item,
                history,
                split,
            });
        }
    }
    instances
}

/// Assembles the instance's expression: one `(literal ∧ target)` clause per
/// history entry (the literal negated for dislikes), joined by ∨ in the
/// given clause order; an empty history degenerates to the bare target.
/// `target_override` swaps in a different item everywhere the target occurs,
/// which is how negative expressions are built.
pub fn build_expression_ordered(
    inst: &RecInstance,
    target_override: Option<u32>,
    order: &[usize],
) -> Expr {
    let target = target_override.unwrap_or(inst.target);
    let mut tree: Option<Expr> = None;
    for &h in order {
        let (item, like) = inst.history[h];
        let literal = if like {
            Expr::var(item)
        } else {
            Expr::not(Expr::var(item))
        };
        let clause = Expr::and(literal, Expr::var(target));
        tree = Some(match tree {
            Some(t) => Expr::or(t, clause),
            None => clause,
        });
    }
    tree.unwrap_or_else(|| Expr::var(target))
}

/// [`build_expression_ordered`] with history in chronological order.
pub fn build_expression(inst: &RecInstance, target_override: Option<u32>) -> Expr {
    let order: Vec<usize> = (0..inst.history.len()).collect();
    build_expression_ordered(inst, target_override, &order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;

    fn write_tmp(lines: &str, sep: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.txt");
        let text: String = lines
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().replace(' ', sep) + "\n")
            .collect();
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn ml100k_loader_remaps_ids_densely() {
        let (_d, path) = write_tmp(
            "196 242 3 881250949
             186 302 3 891717742
             196 377 1 878887116",
            "\t",
        );
        let log = load_ml100k(&path).unwrap();
        assert_eq!(log.records().len(), 3);
        assert_eq!(log.n_users(), 2);
        assert_eq!(log.n_items(), 3);
        assert_eq!(log.records()[0].user, log.records()[2].user);
    }

    #[test]
    fn amazon_loader_accepts_string_ids() {
        let (_d, path) = write_tmp(
            "A2NWSAGRHCP8N5 0439886341 1.0 1367193600
             A2WNBOD3WNDNKT 0439886341 3.0 1374451200",
            ",",
        );
        let log = load_amazon_csv(&path).unwrap();
        assert_eq!(log.records().len(), 2);
        assert_eq!(log.n_items(), 1);
        assert_eq!(log.item_names()[0], "0439886341");
    }

    #[test]
    fn out_of_range_rating_reports_its_line() {
        let (_d, path) = write_tmp(
            "1 10 5 100
             1 11 6 200",
            "\t",
        );
        match load_ml100k(&path) {
            Err(Error::Data { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a data error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_a_valid_empty_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.tsv");
        std::fs::write(&path, "").unwrap();
        let log = load_ml100k(&path).unwrap();
        assert_eq!(log.records().len(), 0);
        assert_eq!(log.n_users(), 0);
    }

    #[test]
    fn binarize_thresholds_at_four() {
        let (_d, path) = write_tmp(
            "1 10 4 100
             1 11 3.5 200
             2 10 5 300",
            "\t",
        );
        let log = load_ml100k(&path).unwrap();
        let events = binarize(&log);
        assert_eq!(
            events.iter().map(|e| e.like).collect::<Vec<_>>(),
            vec![true, false, true]
        );
    }

    /// One user with `n` positives at increasing times, ratings 5.
    fn user_events(user: u32, n: usize) -> Vec<BinarizedEvent> {
        (0..n)
            .map(|i| BinarizedEvent {
                user,
                item: i as u32,
                like: true,
                time: i as i64,
            })
            .collect()
    }

    fn split_counts(instances: &[RecInstance]) -> (usize, usize, usize) {
        let count = |s: Split| instances.iter().filter(|i| i.split == s).count();
        (
            count(Split::Train),
            count(Split::Valid),
            count(Split::Test),
        )
    }

    #[test]
    fn five_positives_all_train() {
        let inst = split_leave_one_out(&user_events(0, 5), 1, 10, true);
        assert_eq!(split_counts(&inst), (5, 0, 0));
    }

    #[test]
    fn six_positives_prefer_test() {
        let inst = split_leave_one_out(&user_events(0, 6), 1, 10, true);
        assert_eq!(split_counts(&inst), (5, 0, 1));
        assert_eq!(inst.last().unwrap().split, Split::Test);
    }

    #[test]
    fn eight_positives_fill_all_three() {
        let inst = split_leave_one_out(&user_events(0, 8), 1, 10, true);
        assert_eq!(split_counts(&inst), (6, 1, 1));
        assert_eq!(inst[6].split, Split::Valid);
        assert_eq!(inst[7].split, Split::Test);
    }

    #[test]
    fn history_is_capped_recent_and_ordered() {
        let events = user_events(0, 14);
        let inst = split_leave_one_out(&events, 1, 10, true);
        let last = inst.last().unwrap();
        assert_eq!(last.target, 13);
        assert_eq!(last.history.len(), 10);
        let items: Vec<u32> = last.history.iter().map(|(i, _)| *i).collect();
        assert_eq!(items, (3..13).collect::<Vec<u32>>());
    }

    #[test]
    fn negative_history_toggle_filters_dislikes() {
        let mut events = user_events(0, 6);
        events.insert(
            3,
            BinarizedEvent {
                user: 0,
                item: 99,
                like: false,
                time: 2, // same time as item 2: input order breaks the tie
            },
        );
        let with = split_leave_one_out(&events, 1, 10, true);
        let without = split_leave_one_out(&events, 1, 10, false);
        let last_with = with.last().unwrap();
        let last_without = without.last().unwrap();
        assert!(last_with.history.iter().any(|&(i, like)| i == 99 && !like));
        assert!(last_without.history.iter().all(|&(i, _)| i != 99));
        // The disliked event lands after item 2 (tie in time, later in input).
        let items: Vec<u32> = last_with.history.iter().map(|(i, _)| *i).collect();
        assert_eq!(items, vec![0, 1, 2, 99, 3, 4]);
    }

    #[test]
    fn expression_matches_the_documented_shape() {
        let inst = RecInstance {
            user: 0,
            target: 7,
            history: vec![(1, true), (2, false)],
            split: Split::Train,
        };
        let expr = build_expression(&inst, None);
        assert_eq!(expr.render(), "((v1 & v7) | ((~v2) & v7))");
        let neg = build_expression(&inst, Some(9));
        assert_eq!(neg.render(), "((v1 & v9) | ((~v2) & v9))");
        let empty = RecInstance {
            user: 0,
            target: 7,
            history: vec![],
            split: Split::Train,
        };
        assert_eq!(build_expression(&empty, None).render(), "v7");
    }

    #[test]
    fn clause_order_permutes_without_changing_leaves() {
        let inst = RecInstance {
            user: 0,
            target: 7,
            history: vec![(1, true), (2, false), (3, true)],
            split: Split::Train,
        };
        let expr = build_expression_ordered(&inst, None, &[2, 0, 1]);
        assert_eq!(expr.render(), "(((v3 & v7) | (v1 & v7)) | ((~v2) & v7))");
        let mut vars = expr.variables();
        vars.sort_unstable();
        assert_eq!(vars, vec![1, 2, 3, 7]);
    }

    fn tiny_dataset() -> RecDataset {
        // Two users over four items; user 0 likes 0,1,2 and dislikes 3.
        let events = vec![
            BinarizedEvent {
                user: 0,
                item: 0,
                like: true,
                time: 0,
            },
            BinarizedEvent {
                user: 0,
                item: 1,
                like: true,
                time: 1,
            },
            BinarizedEvent {
                user: 0,
                item: 2,
                like: true,
                time: 2,
            },
            BinarizedEvent {
                user: 0,
                item: 3,
                like: false,
                time: 3,
            },
            BinarizedEvent {
                user: 1,
                item: 3,
                like: true,
                time: 0,
            },
        ];
        let items = ItemMap::from_names(vec!["a".into(), "b".into(), "c".into(), "d".into()]);
        let instances = split_leave_one_out(&events, 2, 10, true);
        let mut liked: Vec<HashSet<u32>> = vec![HashSet::new(); 2];
        for e in &events {
            if e.like {
                liked[e.user as usize].insert(e.item);
            }
        }
        RecDataset {
            items,
            n_users: 2,
            instances,
            liked,
        }
    }

    #[test]
    fn sampled_negative_is_never_liked() {
        let ds = tiny_dataset();
        let mut rng = SmallRng::seed_from_u64(1);
        for _ in 0..200 {
            let item = ds.sample_negative(0, &mut rng).unwrap();
            assert_eq!(item, 3, "user 0 likes everything except item 3");
        }
    }

    #[test]
    fn negative_sampling_is_uniform_over_the_pool() {
        let ds = tiny_dataset();
        // User 1 likes only item 3: the pool is items 0..=2.
        let mut rng = SmallRng::seed_from_u64(2);
        let mut counts = [0usize; 4];
        let draws = 30_000;
        for _ in 0..draws {
            counts[ds.sample_negative(1, &mut rng).unwrap() as usize] += 1;
        }
        assert_eq!(counts[3], 0);
        let expect = draws as f64 / 3.0;
        let sigma = (draws as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for &c in &counts[..3] {
            assert!(
                (c as f64 - expect).abs() < 3.0 * sigma,
                "count {c} vs expectation {expect}"
            );
        }
    }

    #[test]
    fn exhausted_pool_is_an_error() {
        let mut ds = tiny_dataset();
        ds.liked[0] = (0..4).collect();
        let mut rng = SmallRng::seed_from_u64(3);
        assert!(matches!(
            ds.sample_negative(0, &mut rng),
            Err(Error::EmptyNegativePool(0))
        ));
    }

    #[test]
    fn item_map_round_trips_and_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("items.tsv");
        let map = ItemMap::from_names(vec!["x1".into(), "x2".into()]);
        map.save(&path).unwrap();
        let back = ItemMap::load(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.resolve("x2").unwrap(), 1);
        assert_eq!(back.name(0), "x1");
        assert!(matches!(back.resolve("zz"), Err(Error::UnknownItem(_))));
    }
}
