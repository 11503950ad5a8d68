//! The five clerk tasks. Each body runs inside a caller-owned transaction and
//! leaves the commit to the caller, so tests can script interleavings.

use std::collections::BTreeSet;

use fcwdb::{key, Decimal, Key, KeyRange, ScanOpts, Transaction, TxnError, Value};

use crate::schema::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskKind {
    NewOrder,
    Payment,
    OrderStatus,
    Delivery,
    StockLevel,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::NewOrder,
        TaskKind::Payment,
        TaskKind::OrderStatus,
        TaskKind::Delivery,
        TaskKind::StockLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::NewOrder => "new_order",
            TaskKind::Payment => "payment",
            TaskKind::OrderStatus => "order_status",
            TaskKind::Delivery => "delivery",
            TaskKind::StockLevel => "stock_level",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderLineInput {
    pub item: i64,
    pub supply_w: i64,
    pub quantity: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NewOrderInput {
    pub w: i64,
    pub d: i64,
    pub c: i64,
    pub lines: Vec<OrderLineInput>,
    /// Read the whole warehouse row through a blocking scan instead of the tax field.
    pub block_warehouse: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaymentInput {
    pub w: i64,
    pub d: i64,
    pub c: i64,
    pub amount: Decimal,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderStatusInput {
    pub w: i64,
    pub d: i64,
    pub c: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeliveryInput {
    pub w: i64,
    pub districts: i64,
    pub carrier: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StockLevelInput {
    pub w: i64,
    pub d: i64,
    pub threshold: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Task {
    NewOrder(NewOrderInput),
    Payment(PaymentInput),
    OrderStatus(OrderStatusInput),
    Delivery(DeliveryInput),
    StockLevel(StockLevelInput),
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self {
            Task::NewOrder(_) => TaskKind::NewOrder,
            Task::Payment(_) => TaskKind::Payment,
            Task::OrderStatus(_) => TaskKind::OrderStatus,
            Task::Delivery(_) => TaskKind::Delivery,
            Task::StockLevel(_) => TaskKind::StockLevel,
        }
    }
}

/// Points inside a task body where the clerk spends keying time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    /// Screen entry after the header rows are on display.
    Keying,
    /// Entry of one order line.
    Line,
}

/// Per-attempt identity of the clerk running a task.
#[derive(Clone, Copy, Debug)]
pub struct Ctx {
    pub clerk: i64,
    /// History sequence number this attempt would use.
    pub seq: i64,
    pub now: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    NewOrder { w: i64, d: i64, o_id: i64, total: Decimal },
    Payment { w: i64, d: i64, amount: Decimal },
    OrderStatus { o_id: Option<i64>, lines: Vec<Key> },
    /// Orders delivered, one per district that had any.
    Delivery { delivered: Vec<(i64, i64, i64)> },
    StockLevel { low: usize },
}

fn missing(what: &str, k: &Key) -> TxnError {
    TxnError::Usage(format!("missing {what} row {k}"))
}

fn int(v: i64) -> Value {
    Value::Int(v)
}

fn dec(v: Decimal) -> Value {
    Value::Decimal(v)
}

/// Amount scaled by a rate held as a two-digit decimal, truncating.
fn rate(amount: Decimal, r: Decimal) -> Decimal {
    Decimal::from_cents(amount.cents() * r.cents() / 100)
}

pub fn run_task(
    tx: &mut dyn Transaction,
    task: &Task,
    ctx: Ctx,
    pause: &mut dyn FnMut(Step),
) -> Result<Outcome, TxnError> {
    match task {
        Task::NewOrder(i) => new_order(tx, i, ctx, pause),
        Task::Payment(i) => payment(tx, i, ctx, pause),
        Task::OrderStatus(i) => order_status(tx, i, pause),
        Task::Delivery(i) => delivery(tx, i, ctx, pause),
        Task::StockLevel(i) => stock_level(tx, i, pause),
    }
}

pub fn new_order(
    tx: &mut dyn Transaction,
    i: &NewOrderInput,
    ctx: Ctx,
    pause: &mut dyn FnMut(Step),
) -> Result<Outcome, TxnError> {
    let wk = key![i.w];
    let w_tax = if i.block_warehouse {
        let rows = tx.scan(WAREHOUSE, &KeyRange::Prefix(wk.clone()), &[W_TAX], ScanOpts::block())?;
        rows.first().map(|(_, r)| r.decimal(W_TAX))
    } else {
        tx.get(WAREHOUSE, &wk, &[W_TAX])?.map(|r| r.decimal(W_TAX))
    }
    .ok_or_else(|| missing("WAREHOUSE", &wk))?;

    let dk = key![i.w, i.d];
    let district = tx.get(DISTRICT, &dk, &[D_TAX, D_NEXT_O_ID])?.ok_or_else(|| missing("DISTRICT", &dk))?;
    let o_id = district.int(D_NEXT_O_ID);
    let d_tax = district.decimal(D_TAX);
    tx.update(DISTRICT, &dk, &[(D_NEXT_O_ID, int(o_id + 1))])?;

    let ck = key![i.w, i.d, i.c];
    let customer = tx.get(CUSTOMER, &ck, &[C_DISCOUNT, C_LAST])?.ok_or_else(|| missing("CUSTOMER", &ck))?;
    let discount = customer.decimal(C_DISCOUNT);
    tx.update(CUSTOMER, &ck, &[(C_LAST_O_ID, int(o_id))])?;

    tx.insert(
        ORDER,
        vec![
            int(i.w),
            int(i.d),
            int(o_id),
            int(i.c),
            Value::Timestamp(ctx.now),
            Value::Null,
            int(i.lines.len() as i64),
        ],
    )?;
    tx.insert(NEW_ORDER, vec![int(i.w), int(i.d), int(o_id)])?;
    pause(Step::Keying);

    let mut sum = Decimal::ZERO;
    for (n, line) in i.lines.iter().enumerate() {
        pause(Step::Line);
        let ik = key![line.item];
        let price = tx.get(ITEM, &ik, &[I_PRICE])?.ok_or_else(|| missing("ITEM", &ik))?.decimal(I_PRICE);
        let sk = key![line.supply_w, line.item];
        let stock = tx
            .get(STOCK, &sk, &[S_QUANTITY, S_YTD, S_ORDER_CNT])?
            .ok_or_else(|| missing("STOCK", &sk))?;
        let q = stock.int(S_QUANTITY);
        let q = if q - line.quantity >= 10 { q - line.quantity } else { q - line.quantity + 91 };
        tx.update(
            STOCK,
            &sk,
            &[
                (S_QUANTITY, int(q)),
                (S_YTD, int(stock.int(S_YTD) + line.quantity)),
                (S_ORDER_CNT, int(stock.int(S_ORDER_CNT) + 1)),
            ],
        )?;
        let amount = price * line.quantity;
        sum += amount;
        tx.insert(
            ORDER_LINE,
            vec![
                int(i.w),
                int(i.d),
                int(o_id),
                int(n as i64 + 1),
                int(line.item),
                int(line.supply_w),
                Value::Null,
                int(line.quantity),
                dec(amount),
            ],
        )?;
    }
    tx.insert(
        HISTORY,
        vec![
            int(ctx.clerk),
            int(ctx.seq),
            int(i.w),
            int(i.d),
            int(i.c),
            int(i.w),
            int(i.d),
            Value::Timestamp(ctx.now),
            dec(Decimal::ZERO),
        ],
    )?;
    let total = sum - rate(sum, discount);
    let total = total + rate(total, w_tax) + rate(total, d_tax);
    Ok(Outcome::NewOrder {
        w: i.w,
        d: i.d,
        o_id,
        total,
    })
}

pub fn payment(
    tx: &mut dyn Transaction,
    i: &PaymentInput,
    ctx: Ctx,
    pause: &mut dyn FnMut(Step),
) -> Result<Outcome, TxnError> {
    let wk = key![i.w];
    let dk = key![i.w, i.d];
    let ck = key![i.w, i.d, i.c];
    let w = tx.get(WAREHOUSE, &wk, &[W_NAME, W_YTD])?.ok_or_else(|| missing("WAREHOUSE", &wk))?;
    let d = tx.get(DISTRICT, &dk, &[D_NAME, D_YTD])?.ok_or_else(|| missing("DISTRICT", &dk))?;
    let c = tx
        .get(CUSTOMER, &ck, &[C_LAST, C_BALANCE, C_YTD_PAYMENT, C_PAYMENT_CNT])?
        .ok_or_else(|| missing("CUSTOMER", &ck))?;
    pause(Step::Keying);

    tx.update(WAREHOUSE, &wk, &[(W_YTD, dec(w.decimal(W_YTD) + i.amount))])?;
    tx.update(DISTRICT, &dk, &[(D_YTD, dec(d.decimal(D_YTD) + i.amount))])?;
    tx.update(
        CUSTOMER,
        &ck,
        &[
            (C_BALANCE, dec(c.decimal(C_BALANCE) - i.amount)),
            (C_YTD_PAYMENT, dec(c.decimal(C_YTD_PAYMENT) + i.amount)),
            (C_PAYMENT_CNT, int(c.int(C_PAYMENT_CNT) + 1)),
        ],
    )?;
    tx.insert(
        HISTORY,
        vec![
            int(ctx.clerk),
            int(ctx.seq),
            int(i.w),
            int(i.d),
            int(i.c),
            int(i.w),
            int(i.d),
            Value::Timestamp(ctx.now),
            dec(i.amount),
        ],
    )?;
    Ok(Outcome::Payment {
        w: i.w,
        d: i.d,
        amount: i.amount,
    })
}

pub fn order_status(
    tx: &mut dyn Transaction,
    i: &OrderStatusInput,
    pause: &mut dyn FnMut(Step),
) -> Result<Outcome, TxnError> {
    pause(Step::Keying);
    let ck = key![i.w, i.d, i.c];
    let c = tx
        .get(CUSTOMER, &ck, &[C_LAST, C_BALANCE, C_LAST_O_ID])?
        .ok_or_else(|| missing("CUSTOMER", &ck))?;
    let o_id = c.int(C_LAST_O_ID);
    let ok = key![i.w, i.d, o_id];
    if tx.get(ORDER, &ok, &[O_ENTRY_D, O_CARRIER_ID])?.is_none() {
        return Ok(Outcome::OrderStatus {
            o_id: None,
            lines: Vec::new(),
        });
    }
    let lines = tx.scan(
        ORDER_LINE,
        &KeyRange::Prefix(ok),
        &[OL_I_ID, OL_QUANTITY, OL_AMOUNT, OL_DELIVERY_D],
        ScanOpts::default(),
    )?;
    Ok(Outcome::OrderStatus {
        o_id: Some(o_id),
        lines: lines.into_iter().map(|(k, _)| k).collect(),
    })
}

pub fn delivery(
    tx: &mut dyn Transaction,
    i: &DeliveryInput,
    ctx: Ctx,
    pause: &mut dyn FnMut(Step),
) -> Result<Outcome, TxnError> {
    pause(Step::Keying);
    let mut delivered = Vec::new();
    for d in 1..=i.districts {
        let oldest = tx.scan(NEW_ORDER, &KeyRange::Prefix(key![i.w, d]), &[], ScanOpts::first(1))?;
        let Some((nk, _)) = oldest.into_iter().next() else {
            continue;
        };
        let o_id = nk.values()[NO_O_ID].as_int().expect("integer order id");
        tx.delete(NEW_ORDER, &nk)?;
        let ok = key![i.w, d, o_id];
        let order = tx.get(ORDER, &ok, &[O_C_ID])?.ok_or_else(|| missing("ORDER", &ok))?;
        tx.update(ORDER, &ok, &[(O_CARRIER_ID, int(i.carrier))])?;
        let lines = tx.scan(ORDER_LINE, &KeyRange::Prefix(ok), &[OL_AMOUNT], ScanOpts::default())?;
        let mut sum = Decimal::ZERO;
        for (lk, line) in &lines {
            sum += line.decimal(OL_AMOUNT);
            tx.update(ORDER_LINE, lk, &[(OL_DELIVERY_D, Value::Timestamp(ctx.now))])?;
        }
        let ck = key![i.w, d, order.int(O_C_ID)];
        let c = tx
            .get(CUSTOMER, &ck, &[C_BALANCE, C_DELIVERY_CNT])?
            .ok_or_else(|| missing("CUSTOMER", &ck))?;
        tx.update(
            CUSTOMER,
            &ck,
            &[
                (C_BALANCE, dec(c.decimal(C_BALANCE) + sum)),
                (C_DELIVERY_CNT, int(c.int(C_DELIVERY_CNT) + 1)),
            ],
        )?;
        delivered.push((i.w, d, o_id));
    }
    Ok(Outcome::Delivery { delivered })
}

pub fn stock_level(
    tx: &mut dyn Transaction,
    i: &StockLevelInput,
    pause: &mut dyn FnMut(Step),
) -> Result<Outcome, TxnError> {
    pause(Step::Keying);
    let dk = key![i.w, i.d];
    let next = tx.get(DISTRICT, &dk, &[D_NEXT_O_ID])?.ok_or_else(|| missing("DISTRICT", &dk))?.int(D_NEXT_O_ID);
    let range = KeyRange::Between(
        std::ops::Bound::Included(key![i.w, i.d, next - 20]),
        std::ops::Bound::Excluded(key![i.w, i.d, next]),
    );
    let lines = tx.scan(ORDER_LINE, &range, &[OL_I_ID], ScanOpts::default())?;
    let items: BTreeSet<i64> = lines.iter().map(|(_, r)| r.int(OL_I_ID)).collect();
    let mut low = 0;
    for item in items {
        let sk = key![i.w, item];
        let s = tx.get(STOCK, &sk, &[S_QUANTITY])?.ok_or_else(|| missing("STOCK", &sk))?;
        if s.int(S_QUANTITY) < i.threshold {
            low += 1;
        }
    }
    Ok(Outcome::StockLevel { low })
}
