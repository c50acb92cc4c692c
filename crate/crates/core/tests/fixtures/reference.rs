//! Reference inputs for the three prompt templates, shared by the golden
//! tests here and the acceptance suite of the `inca` crate.

pub const CREDIT_CARD_QUERIES: [&str; 10] = [
    "how would i apply for an american express",
    "show me the application for a visa card",
    "can you apply for idaho independent card for me",
    "do you have any information on how to open a new credit card",
    "is this where i apply for a new credit card",
    "is it possible to apply for a new credit card",
    "walk me through applying for a visa card",
    "what's the procedure to apply for a new credit card",
    "i want to put in an application for a line of a credit card how do i do that",
    "does bank of america give credit cards to people like me",
];

pub const DIRECT_DEPOSIT: &str = "The users are inquiring about the process of setting up a Direct Deposit for their paychecks or bank accounts. They want to know how to arrange for their checks to deposit directly into their accounts and are looking for instructions or guidance on how to do this. Some users are specifically interested in setting up Direct Deposit at certain banks, while others are seeking general information on how Direct Deposit works.";
pub const INCOME: &str = "The users are inquiring about their current or past income, salary, or earnings from their job. They want to know how much money they make or earned, and sometimes they want to calculate their total income. Some users are also interested in knowing the amount they bring in annually or their compensation.";
pub const PAYDAY: &str = "The users are inquiring about the timing of their next paycheck or payment. They want to know how often they are paid, when they can expect to be paid next, and when their next payment will be deposited. They are also interested in knowing the date or day on which they will receive their next check or be paid. Some users want to be informed about the date their most recent payment was made, while others want to plan for their next upcoming payment.";

pub const TAG_QUERY: &str = "do i have to pay for carry-ons on delta";
pub const PREDICTION_QUERY: &str = "get my paycheck to direct deposit";
