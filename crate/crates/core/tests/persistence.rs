use std::collections::BTreeMap;
use std::ops::Bound;

use fcwdb::relational::DeleteMode;
use fcwdb::{key, Database, Decimal, Key, PersistentMap, Schema, SnapshotRoot, TableSpec, Tables, Value, ValueKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn map_matches_shadow_over_100k_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut map: PersistentMap<u32, u64> = PersistentMap::new();
    let mut shadow: BTreeMap<u32, u64> = BTreeMap::new();
    let mut snapshots = Vec::new();
    let mut divergences = 0;
    for i in 0..100_000u64 {
        let k = rng.gen_range(0..4000);
        match rng.gen_range(0..100) {
            0..=44 => {
                map = map.put(k, i);
                shadow.insert(k, i);
            }
            45..=69 => {
                map = map.delete(&k);
                shadow.remove(&k);
            }
            70..=89 => divergences += usize::from(map.get(&k) != shadow.get(&k)),
            _ => {
                let hi = k + rng.gen_range(0..200);
                let got: Vec<_> = map.range(Bound::Included(&k), Bound::Excluded(&hi)).unwrap().collect();
                let want: Vec<_> = shadow.range(k..hi).collect();
                divergences += usize::from(got != want);
            }
        }
        divergences += usize::from(map.len() != shadow.len());
        if i % 10_000 == 0 {
            map.check_invariants().unwrap();
            snapshots.push((map.clone(), shadow.clone()));
        }
    }
    assert_eq!(divergences, 0);
    assert!(map.iter().eq(shadow.iter()));
    for (m, s) in &snapshots {
        assert!(m.iter().eq(s.iter()), "an older version changed");
        m.check_invariants().unwrap();
    }
    let bound = 1.45 * ((map.len() + 2) as f64).log2();
    assert!((map.height() as f64) <= bound);
}

#[test]
fn untouched_versions_share_structure() {
    let m: PersistentMap<u32, u32> = (0..1000).map(|k| (k, k)).collect();
    let same = m.delete(&5000);
    assert!(same.ptr_eq(&m));
    let changed = m.put(3, 99);
    assert!(!changed.ptr_eq(&m));
    assert_eq!(m.get(&3), Some(&3));
    assert_eq!(changed.get(&3), Some(&99));
    let back = changed.put(3, 3);
    assert_eq!(back, m);
}

fn accounts() -> Schema {
    Schema::new()
        .define_table(
            TableSpec::new("ACCT")
                .column("ID", ValueKind::Int)
                .column("OWNER", ValueKind::Text)
                .column("BAL", ValueKind::Decimal)
                .primary_key(&["ID"])
                .unique(&["OWNER"]),
        )
        .unwrap()
}

#[test]
fn tables_match_shadow_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut t = Tables::empty(accounts().into());
    let mut shadow: BTreeMap<i64, (String, i64)> = BTreeMap::new();
    let mut versions = Vec::new();
    for step in 0..20_000u64 {
        let id = rng.gen_range(0..300);
        let owner = format!("o{}", rng.gen_range(0..400));
        let taken = shadow.values().any(|(o, _)| *o == owner);
        match rng.gen_range(0..3) {
            0 => {
                let r = t.insert(0, vec![Value::Int(id), Value::text(&owner), Value::Decimal(Decimal::ZERO)], step);
                assert_eq!(r.is_ok(), !shadow.contains_key(&id) && !taken, "insert {id} {owner}");
                if r.is_ok() {
                    shadow.insert(id, (owner, 0));
                }
            }
            1 => {
                let cents = rng.gen_range(-500..500);
                let r = t.update(0, &key![id], &[(2, Value::Decimal(Decimal::from_cents(cents)))], step);
                assert_eq!(r.is_ok(), shadow.contains_key(&id));
                if let Some(row) = shadow.get_mut(&id) {
                    row.1 = cents;
                }
            }
            _ => {
                let r = t.delete(0, &key![id], DeleteMode::FollowActions);
                assert_eq!(r.is_ok(), shadow.remove(&id).is_some());
            }
        }
        if step % 2000 == 0 {
            versions.push((t.clone(), shadow.clone()));
        }
    }
    let check = |t: &Tables, s: &BTreeMap<i64, (String, i64)>| {
        let rows: Vec<(i64, String, i64)> = t
            .range(0, &fcwdb::KeyRange::All)
            .unwrap()
            .map(|(_, r)| (r.int(0), r.get(1).as_text().unwrap().to_string(), r.decimal(2).cents()))
            .collect();
        let want: Vec<(i64, String, i64)> = s.iter().map(|(k, (o, b))| (*k, o.clone(), *b)).collect();
        assert_eq!(rows, want);
        for (k, (o, _)) in s {
            let (pk, _) = t.lookup_unique(0, &[1], &Key::new(vec![Value::text(o)])).unwrap().unwrap();
            assert_eq!(pk, key![*k]);
        }
        t.check_all().unwrap();
    };
    check(&t, &shadow);
    for (t, s) in &versions {
        check(t, s);
    }
}

#[test]
fn published_roots_never_change() {
    let mut base = SnapshotRoot::genesis(accounts().into());
    for id in 0..50 {
        base.tables
            .insert(0, vec![Value::Int(id), Value::text(&format!("o{id}")), Value::Decimal(Decimal::ZERO)], 0)
            .unwrap();
    }
    let db = Database::new(base);
    let engine = fcwdb::occ::OccEngine::new(db.clone());
    let mut seen = Vec::new();
    for i in 0..40 {
        seen.push(db.load());
        let mut tx = fcwdb::Engine::begin(&engine);
        tx.update(0, &key![i % 50], &[(2, Value::Decimal(Decimal::from_cents(i + 1)))]).unwrap();
        tx.commit().unwrap();
    }
    for (i, root) in seen.iter().enumerate() {
        assert_eq!(root.epoch, i as u64);
        for id in 0..50i64 {
            let bal = root.tables.get(0, &key![id]).unwrap().decimal(2).cents();
            let want = if id < i as i64 { id + 1 } else { 0 };
            assert_eq!(bal, want, "root {i} row {id}");
        }
    }
}
