//! Post-run consistency checks on the final state against a run's metrics.

use fcwdb::{key, Decimal, KeyRange, Tables};

use crate::bench::Metrics;
use crate::schema::*;

/// Every violated property, or `Ok` when the run is consistent.
pub fn audit(initial: &Tables, last: &Tables, m: &Metrics) -> Result<(), Vec<String>> {
    let mut bad = Vec::new();

    for (wk, w0) in initial.range(WAREHOUSE, &KeyRange::All).expect("full range") {
        let w_id = w0.int(W_ID);
        let paid: Decimal = m.payments.iter().filter(|((w, _), _)| *w == w_id).map(|(_, a)| *a).sum();
        match last.get(WAREHOUSE, &wk) {
            Some(w1) if w1.decimal(W_YTD) == w0.decimal(W_YTD) + paid => {}
            Some(w1) => bad.push(format!(
                "warehouse {w_id}: W_YTD {} != {} + {paid}",
                w1.decimal(W_YTD),
                w0.decimal(W_YTD)
            )),
            None => bad.push(format!("warehouse {w_id} disappeared")),
        }
    }

    let mut new_orders = 0;
    for (dk, d0) in initial.range(DISTRICT, &KeyRange::All).expect("full range") {
        let (w, d) = (d0.int(D_W_ID), d0.int(D_ID));
        let Some(d1) = last.get(DISTRICT, &dk) else {
            bad.push(format!("district {w}-{d} disappeared"));
            continue;
        };
        let paid = m.payments.get(&(w, d)).copied().unwrap_or(Decimal::ZERO);
        if d1.decimal(D_YTD) != d0.decimal(D_YTD) + paid {
            bad.push(format!(
                "district {w}-{d}: D_YTD {} != {} + {paid}",
                d1.decimal(D_YTD),
                d0.decimal(D_YTD)
            ));
        }
        let placed = m.new_orders.get(&(w, d)).copied().unwrap_or(0) as i64;
        new_orders += placed;
        let next0 = d0.int(D_NEXT_O_ID);
        if d1.int(D_NEXT_O_ID) != next0 + placed {
            bad.push(format!(
                "district {w}-{d}: NEXT_O_ID {} != {next0} + {placed}",
                d1.int(D_NEXT_O_ID)
            ));
        }
        let ids: Vec<i64> = last
            .range(ORDER, &KeyRange::Prefix(key![w, d]))
            .expect("prefix range")
            .map(|(_, r)| r.int(O_ID))
            .filter(|o| *o >= next0)
            .collect();
        let expected: Vec<i64> = (next0..next0 + placed).collect();
        if ids != expected {
            bad.push(format!(
                "district {w}-{d}: new order ids {:?} are not {next0}..{}",
                ids,
                next0 + placed
            ));
        }
    }

    let grew = |t| last.len(t) as i64 - initial.len(t) as i64;
    if grew(ORDER) != new_orders {
        bad.push(format!("ORDER grew by {} but {new_orders} NewOrders committed", grew(ORDER)));
    }
    let delivered = m.delivered_orders as i64;
    if grew(NEW_ORDER) != new_orders - delivered {
        bad.push(format!(
            "NEW_ORDER grew by {} but {new_orders} placed and {delivered} delivered",
            grew(NEW_ORDER)
        ));
    }
    let payments = m.per_task[crate::tasks::TaskKind::Payment.index()].commits as i64;
    if grew(HISTORY) != new_orders + payments {
        bad.push(format!(
            "HISTORY grew by {} but {new_orders} NewOrders and {payments} Payments committed",
            grew(HISTORY)
        ));
    }
    if let Err(e) = last.check_all() {
        bad.push(format!("constraint scan: {e}"));
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}
