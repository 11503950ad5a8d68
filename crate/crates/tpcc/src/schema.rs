//! The nine order-entry tables. Table ids follow definition order, which
//! also orders every parent before its children.

use std::sync::Arc;

use fcwdb::relational::FkAction::Restrict;
use fcwdb::{ColumnId, Schema, TableId, TableSpec, ValueKind::*};

pub const WAREHOUSE: TableId = 0;
pub const DISTRICT: TableId = 1;
pub const CUSTOMER: TableId = 2;
pub const HISTORY: TableId = 3;
pub const ITEM: TableId = 4;
pub const STOCK: TableId = 5;
pub const ORDER: TableId = 6;
pub const NEW_ORDER: TableId = 7;
pub const ORDER_LINE: TableId = 8;

pub const TABLE_NAMES: [&str; 9] = [
    "WAREHOUSE",
    "DISTRICT",
    "CUSTOMER",
    "HISTORY",
    "ITEM",
    "STOCK",
    "ORDER",
    "NEW_ORDER",
    "ORDER_LINE",
];

pub const W_ID: ColumnId = 0;
pub const W_NAME: ColumnId = 1;
pub const W_TAX: ColumnId = 2;
pub const W_YTD: ColumnId = 3;

pub const D_W_ID: ColumnId = 0;
pub const D_ID: ColumnId = 1;
pub const D_NAME: ColumnId = 2;
pub const D_TAX: ColumnId = 3;
pub const D_YTD: ColumnId = 4;
pub const D_NEXT_O_ID: ColumnId = 5;

pub const C_W_ID: ColumnId = 0;
pub const C_D_ID: ColumnId = 1;
pub const C_ID: ColumnId = 2;
pub const C_LAST: ColumnId = 3;
pub const C_DISCOUNT: ColumnId = 4;
pub const C_BALANCE: ColumnId = 5;
pub const C_YTD_PAYMENT: ColumnId = 6;
pub const C_PAYMENT_CNT: ColumnId = 7;
pub const C_DELIVERY_CNT: ColumnId = 8;
pub const C_LAST_O_ID: ColumnId = 9;

/// History rows are keyed by the clerk that wrote them and a per-clerk sequence.
pub const H_CLERK: ColumnId = 0;
pub const H_SEQ: ColumnId = 1;
pub const H_C_W_ID: ColumnId = 2;
pub const H_C_D_ID: ColumnId = 3;
pub const H_C_ID: ColumnId = 4;
pub const H_W_ID: ColumnId = 5;
pub const H_D_ID: ColumnId = 6;
pub const H_DATE: ColumnId = 7;
pub const H_AMOUNT: ColumnId = 8;

pub const I_ID: ColumnId = 0;
pub const I_NAME: ColumnId = 1;
pub const I_PRICE: ColumnId = 2;

pub const S_W_ID: ColumnId = 0;
pub const S_I_ID: ColumnId = 1;
pub const S_QUANTITY: ColumnId = 2;
pub const S_YTD: ColumnId = 3;
pub const S_ORDER_CNT: ColumnId = 4;

pub const O_W_ID: ColumnId = 0;
pub const O_D_ID: ColumnId = 1;
pub const O_ID: ColumnId = 2;
pub const O_C_ID: ColumnId = 3;
pub const O_ENTRY_D: ColumnId = 4;
pub const O_CARRIER_ID: ColumnId = 5;
pub const O_OL_CNT: ColumnId = 6;

pub const NO_W_ID: ColumnId = 0;
pub const NO_D_ID: ColumnId = 1;
pub const NO_O_ID: ColumnId = 2;

pub const OL_W_ID: ColumnId = 0;
pub const OL_D_ID: ColumnId = 1;
pub const OL_O_ID: ColumnId = 2;
pub const OL_NUMBER: ColumnId = 3;
pub const OL_I_ID: ColumnId = 4;
pub const OL_SUPPLY_W_ID: ColumnId = 5;
pub const OL_DELIVERY_D: ColumnId = 6;
pub const OL_QUANTITY: ColumnId = 7;
pub const OL_AMOUNT: ColumnId = 8;

pub fn tpcc_schema() -> Arc<Schema> {
    let specs = [
        TableSpec::new("WAREHOUSE")
            .column("W_ID", Int)
            .column("W_NAME", Text)
            .column("W_TAX", Decimal)
            .column("W_YTD", Decimal)
            .primary_key(&["W_ID"]),
        TableSpec::new("DISTRICT")
            .column("D_W_ID", Int)
            .column("D_ID", Int)
            .column("D_NAME", Text)
            .column("D_TAX", Decimal)
            .column("D_YTD", Decimal)
            .column("D_NEXT_O_ID", Int)
            .primary_key(&["D_W_ID", "D_ID"])
            .foreign_key(&["D_W_ID"], "WAREHOUSE", &["W_ID"], Restrict),
        TableSpec::new("CUSTOMER")
            .column("C_W_ID", Int)
            .column("C_D_ID", Int)
            .column("C_ID", Int)
            .column("C_LAST", Text)
            .column("C_DISCOUNT", Decimal)
            .column("C_BALANCE", Decimal)
            .column("C_YTD_PAYMENT", Decimal)
            .column("C_PAYMENT_CNT", Int)
            .column("C_DELIVERY_CNT", Int)
            .column("C_LAST_O_ID", Int)
            .primary_key(&["C_W_ID", "C_D_ID", "C_ID"])
            .foreign_key(&["C_W_ID", "C_D_ID"], "DISTRICT", &["D_W_ID", "D_ID"], Restrict),
        TableSpec::new("HISTORY")
            .column("H_CLERK", Int)
            .column("H_SEQ", Int)
            .column("H_C_W_ID", Int)
            .column("H_C_D_ID", Int)
            .column("H_C_ID", Int)
            .column("H_W_ID", Int)
            .column("H_D_ID", Int)
            .column("H_DATE", Timestamp)
            .column("H_AMOUNT", Decimal)
            .primary_key(&["H_CLERK", "H_SEQ"])
            .foreign_key(
                &["H_C_W_ID", "H_C_D_ID", "H_C_ID"],
                "CUSTOMER",
                &["C_W_ID", "C_D_ID", "C_ID"],
                Restrict,
            )
            .foreign_key(&["H_W_ID", "H_D_ID"], "DISTRICT", &["D_W_ID", "D_ID"], Restrict),
        TableSpec::new("ITEM")
            .column("I_ID", Int)
            .column("I_NAME", Text)
            .column("I_PRICE", Decimal)
            .primary_key(&["I_ID"]),
        TableSpec::new("STOCK")
            .column("S_W_ID", Int)
            .column("S_I_ID", Int)
            .column("S_QUANTITY", Int)
            .column("S_YTD", Int)
            .column("S_ORDER_CNT", Int)
            .primary_key(&["S_W_ID", "S_I_ID"])
            .foreign_key(&["S_W_ID"], "WAREHOUSE", &["W_ID"], Restrict)
            .foreign_key(&["S_I_ID"], "ITEM", &["I_ID"], Restrict),
        TableSpec::new("ORDER")
            .column("O_W_ID", Int)
            .column("O_D_ID", Int)
            .column("O_ID", Int)
            .column("O_C_ID", Int)
            .column("O_ENTRY_D", Timestamp)
            .nullable("O_CARRIER_ID", Int)
            .column("O_OL_CNT", Int)
            .primary_key(&["O_W_ID", "O_D_ID", "O_ID"])
            .foreign_key(
                &["O_W_ID", "O_D_ID", "O_C_ID"],
                "CUSTOMER",
                &["C_W_ID", "C_D_ID", "C_ID"],
                Restrict,
            ),
        TableSpec::new("NEW_ORDER")
            .column("NO_W_ID", Int)
            .column("NO_D_ID", Int)
            .column("NO_O_ID", Int)
            .primary_key(&["NO_W_ID", "NO_D_ID", "NO_O_ID"])
            .foreign_key(&["NO_W_ID", "NO_D_ID", "NO_O_ID"], "ORDER", &["O_W_ID", "O_D_ID", "O_ID"], Restrict),
        TableSpec::new("ORDER_LINE")
            .column("OL_W_ID", Int)
            .column("OL_D_ID", Int)
            .column("OL_O_ID", Int)
            .column("OL_NUMBER", Int)
            .column("OL_I_ID", Int)
            .column("OL_SUPPLY_W_ID", Int)
            .nullable("OL_DELIVERY_D", Timestamp)
            .column("OL_QUANTITY", Int)
            .column("OL_AMOUNT", Decimal)
            .primary_key(&["OL_W_ID", "OL_D_ID", "OL_O_ID", "OL_NUMBER"])
            .foreign_key(&["OL_W_ID", "OL_D_ID", "OL_O_ID"], "ORDER", &["O_W_ID", "O_D_ID", "O_ID"], Restrict)
            .foreign_key(&["OL_SUPPLY_W_ID", "OL_I_ID"], "STOCK", &["S_W_ID", "S_I_ID"], Restrict),
    ];
    let mut schema = Schema::new();
    for spec in specs {
        schema = schema.define_table(spec).expect("order-entry schema is well formed");
    }
    Arc::new(schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_match_names() {
        let s = tpcc_schema();
        for (id, name) in TABLE_NAMES.iter().enumerate() {
            assert_eq!(s.table_id(name), Some(id));
        }
        let c = s.table(CUSTOMER);
        assert_eq!(c.column_id("C_LAST_O_ID"), Some(C_LAST_O_ID));
        assert_eq!(s.table(ORDER_LINE).column_id("OL_AMOUNT"), Some(OL_AMOUNT));
        assert_eq!(s.table(HISTORY).column_id("H_AMOUNT"), Some(H_AMOUNT));
        assert_eq!(s.table(STOCK).column_id("S_ORDER_CNT"), Some(S_ORDER_CNT));
        assert_eq!(s.table(ORDER).column_id("O_OL_CNT"), Some(O_OL_CNT));
        assert_eq!(s.table(DISTRICT).column_id("D_NEXT_O_ID"), Some(D_NEXT_O_ID));
    }
}
