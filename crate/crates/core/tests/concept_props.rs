use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use proptest::prelude::*;
use servnet_core::concept::{chain, ConceptChain, ConceptError, ConceptStore, FilterPredicate, Literal, NewRecord};

/// A record by content: chain plus sorted integer payload.
type Content = (Vec<String>, BTreeMap<String, i64>);

fn content() -> impl Strategy<Value = Content> {
    (
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 1..4),
        prop::collection::btree_map(prop::sample::select(vec!["x", "y"]), 0i64..4, 0..3),
    )
        .prop_map(|(c, p)| (c.into_iter().map(String::from).collect(), p.into_iter().map(|(k, v)| (k.to_string(), v)).collect()))
}

fn entries() -> impl Strategy<Value = Vec<Vec<Content>>> {
    prop::collection::vec(prop::collection::vec(content(), 1..5), 1..30)
}

fn to_new(c: &Content) -> NewRecord {
    NewRecord::new(
        ConceptChain::new(c.0.clone()).unwrap(),
        c.1.iter().map(|(k, v)| (k.clone(), Literal::Int(*v))),
    )
}

fn content_of(r: &servnet_core::concept::Record) -> Content {
    let payload = r
        .payload
        .iter()
        .map(|(k, v)| match v {
            Literal::Int(i) => (k.clone(), *i),
            other => panic!("unexpected literal {other:?}"),
        })
        .collect();
    (r.chain.concepts().to_vec(), payload)
}

struct Oracle {
    /// Distinct contents in first-seen order.
    seen: Vec<Content>,
    entries: Vec<Vec<Content>>,
}

impl Oracle {
    fn new(entries: &[Vec<Content>]) -> Self {
        let mut seen: Vec<Content> = Vec::new();
        for c in entries.iter().flatten() {
            if !seen.contains(c) {
                seen.push(c.clone());
            }
        }
        Oracle { seen, entries: entries.to_vec() }
    }

    fn hits(&self, a: &Content, b: &Content) -> u32 {
        if a == b {
            return 0;
        }
        self.entries.iter().filter(|e| e.contains(a) && e.contains(b)).count() as u32
    }

    /// Depth-first over a lexically ordered trie is a stable sort by chain.
    fn under(&self, prefix: &[String]) -> Vec<Content> {
        let mut v: Vec<Content> = self.seen.iter().filter(|c| c.0.starts_with(prefix)).cloned().collect();
        v.sort_by(|p, q| p.0.cmp(&q.0));
        v
    }
}

fn load(entries: &[Vec<Content>]) -> ConceptStore {
    let store = ConceptStore::new(3);
    for e in entries {
        store.add_entry(e.iter().map(to_new).collect()).unwrap();
    }
    store
}

fn id_of(store: &ConceptStore, c: &Content) -> String {
    let id = to_new(c).content_id();
    assert!(store.get(&id).is_some());
    id
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn chain_queries_match_prefix_oracle(es in entries(), prefix in prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 1..3)) {
        let store = load(&es);
        let oracle = Oracle::new(&es);
        prop_assert_eq!(store.len(), oracle.seen.len());
        let prefix: Vec<String> = prefix.into_iter().map(String::from).collect();
        let got: Vec<Content> = store.query_chain(&ConceptChain::new(prefix.clone()).unwrap()).iter().map(content_of).collect();
        prop_assert_eq!(got, oracle.under(&prefix));
    }

    #[test]
    fn filtered_queries_match_brute_force(es in entries(), bound in 0i64..5, reliable in any::<bool>()) {
        let store = load(&es);
        let oracle = Oracle::new(&es);
        let (ta, tb) = (vec!["a".to_string()], vec!["b".to_string()]);
        let targets = [chain(&["a"]), chain(&["b"])];
        let (ua, ub) = (oracle.under(&ta), oracle.under(&tb));
        let has_x = |v: &[Content]| v.iter().any(|c| c.1.contains_key("x"));
        let pred = FilterPredicate::all().lt(0, "x", bound).join(0, "x", 1, "x");
        let got = store.query_filtered(&targets, &pred, reliable);
        if (!ua.is_empty() && !has_x(&ua)) || (!ub.is_empty() && !has_x(&ub)) {
            prop_assert!(matches!(got, Err(ConceptError::UnknownField(_))));
            return Ok(());
        }
        let mut expect = Vec::new();
        for p in &ua {
            for q in &ub {
                let (Some(&xp), Some(&xq)) = (p.1.get("x"), q.1.get("x")) else { continue };
                if xp < bound && xp == xq && (!reliable || oracle.hits(p, q) >= 3) {
                    expect.push((p.clone(), q.clone()));
                }
            }
        }
        let got: Vec<(Content, Content)> = got.unwrap().iter().map(|t| (content_of(&t[0]), content_of(&t[1]))).collect();
        prop_assert_eq!(got, expect);
    }

    #[test]
    fn hits_are_symmetric_and_counted(es in entries()) {
        let store = load(&es);
        let oracle = Oracle::new(&es);
        for a in &oracle.seen {
            for b in &oracle.seen {
                let (ia, ib) = (id_of(&store, a), id_of(&store, b));
                let h = store.hits(&ia, &ib).unwrap();
                prop_assert_eq!(h, store.hits(&ib, &ia).unwrap());
                prop_assert_eq!(h, oracle.hits(a, b));
                prop_assert_eq!(store.is_reliable(&ia, &ib).unwrap(), h >= 3);
            }
        }
    }

    #[test]
    fn hits_never_decrease(es in entries(), more in entries()) {
        let store = load(&es);
        let before: BTreeMap<(String, String), u32> = store.colinks().into_iter().map(|l| ((l.a, l.b), l.hits)).collect();
        for e in &more {
            store.add_entry(e.iter().map(to_new).collect()).unwrap();
        }
        let after: BTreeMap<(String, String), u32> = store.colinks().into_iter().map(|l| ((l.a, l.b), l.hits)).collect();
        for (k, h) in before {
            prop_assert!(after[&k] >= h);
        }
    }
}

#[test]
fn unknown_record_and_op() {
    let store = ConceptStore::default();
    assert!(matches!(store.hits("r-x", "r-y"), Err(ConceptError::UnknownRecord(_))));
    assert!(matches!("near".parse::<servnet_core::concept::Op>(), Err(ConceptError::UnknownField(_))));
    assert_eq!(ConceptChain::new(Vec::<String>::new()), Err(ConceptError::EmptyChain));
}

#[test]
fn travel_fixture_reliable_triple() {
    let store = ConceptStore::default();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/travel.jsonl");
    store.load_jsonl(BufReader::new(File::open(path).unwrap())).unwrap();
    let targets = [chain(&["hotel"]), chain(&["flight"]), chain(&["connection_transport"])];
    let pred = FilterPredicate::all()
        .eq(0, "city", "Paris")
        .lt(0, "cost", 100.0)
        .join(0, "check_in", 1, "flight_date")
        .join(0, "check_in", 2, "date");
    let gated = store.query_filtered(&targets, &pred, true).unwrap();
    assert_eq!(gated.len(), 1);
    assert_eq!(gated[0][0].payload["street"], Literal::from("Rue de la Conference"));
    let open = store.query_filtered(&targets, &pred, false).unwrap();
    assert!(open.len() > gated.len());
}
