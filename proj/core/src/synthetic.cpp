#include "relcat/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <spdlog/fmt/fmt.h>

#include "relcat/errors.hpp"

namespace relcat {

namespace {

struct CategoryType {
  const char* code;
  std::vector<const char*> names;
  std::vector<const char*> merchants;
  std::vector<const char*> memos;
  double min_amount;
  double max_amount;
  bool income;
};

const std::vector<CategoryType>& category_types() {
  static const std::vector<CategoryType> types = {
      {"Automobile", {"Fuel", "Gas & Fuel", "Auto Fuel", "Vehicle Fuel"},
       {"EXXONMOBIL", "SHELL OIL", "CHEVRON", "BP GAS", "SUNOCO"}, {"fuel", "van fill up", "truck diesel"},
       20, 140, false},
      {"Travel", {"Rideshare", "Taxi & Rideshare", "Local Transport", "Ground Travel"},
       {"UBER TRIP", "LYFT RIDE", "YELLOW CAB", "CURB TAXI"}, {"airport ride", "client visit"}, 8, 90, false},
      {"Travel", {"Airfare", "Flights", "Air Travel"},
       {"DELTA AIR LINES", "UNITED AIRLINES", "SOUTHWEST AIR", "AMERICAN AIRLINES", "JETBLUE"},
       {"conference trip", "sales trip"}, 120, 900, false},
      {"Travel", {"Lodging", "Hotels", "Accommodation"}, {"MARRIOTT", "HILTON HOTELS", "HYATT", "AIRBNB"},
       {"2 nights", "trade show"}, 90, 700, false},
      {"Meals and Entertainment", {"Meals", "Meals & Entertainment", "Restaurants", "Business Meals"},
       {"STARBUCKS", "MCDONALDS", "CHIPOTLE", "DUNKIN", "PANERA BREAD", "SUBWAY"},
       {"client lunch", "team coffee", "staff meeting"}, 4, 160, false},
      {"Office Expenses", {"Office Supplies", "Supplies", "Office Expenses"},
       {"STAPLES", "OFFICE DEPOT", "AMAZON MKTPL", "BEST BUY"}, {"printer paper", "toner", "desk chair"}, 10, 400,
       false},
      {"Dues and Subscriptions", {"Software", "Software Subscriptions", "Dues & Subscriptions", "SaaS Tools"},
       {"ADOBE", "MICROSOFT", "GOOGLE WORKSPACE", "ZOOM US", "DROPBOX", "INTUIT"}, {"monthly plan", "annual renewal"},
       10, 300, false},
      {"Utilities", {"Utilities", "Electric & Gas", "Utility Bills"},
       {"PG&E", "CON EDISON", "DUKE ENERGY", "NATIONAL GRID"}, {"electric bill", "gas bill"}, 60, 600, false},
      {"Utilities", {"Telephone", "Phone & Internet", "Internet"},
       {"VERIZON WIRELESS", "AT&T", "COMCAST", "T-MOBILE"}, {"cell plan", "office internet"}, 40, 300, false},
      {"Rent or Lease", {"Rent", "Rent & Lease", "Office Rent"},
       {"REGUS", "WEWORK", "OAK PROPERTY MGMT", "CBRE LEASING"}, {"monthly rent", "storage unit"}, 500, 5000, false},
      {"Advertising", {"Advertising", "Marketing", "Advertising & Marketing"},
       {"FACEBOOK ADS", "GOOGLE ADS", "YELP ADS", "MAILCHIMP"}, {"campaign", "promo boost"}, 20, 900, false},
      {"Office Expenses", {"Shipping", "Postage", "Shipping & Delivery"},
       {"USPS", "FEDEX", "UPS STORE", "DHL EXPRESS"}, {"overnight", "returns"}, 5, 200, false},
      {"Insurance", {"Insurance", "Business Insurance", "Liability Insurance"},
       {"STATE FARM", "GEICO", "PROGRESSIVE INS", "HISCOX"}, {"policy premium"}, 80, 1200, false},
      {"Bank Charges", {"Bank Fees", "Bank Charges", "Service Charges"},
       {"MONTHLY SERVICE FEE", "WIRE TRANSFER FEE", "OVERDRAFT FEE"}, {}, 3, 45, false},
      {"Income", {"Sales", "Income", "Revenue", "Sales Revenue"},
       {"STRIPE TRANSFER", "SQUARE DEPOSIT", "PAYPAL TRANSFER", "SHOPIFY PAYOUT"}, {"weekly payout", "invoice paid"},
       50, 6000, true},
      {"Repairs", {"Repairs & Maintenance", "Repairs", "Maintenance"},
       {"HOME DEPOT", "LOWES", "ACE HARDWARE", "GRAINGER"}, {"shop repair", "parts"}, 10, 600, false},
      {"Payroll Expenses", {"Payroll", "Wages", "Payroll Expenses"}, {"GUSTO", "ADP PAYROLL", "PAYCHEX"},
       {"biweekly run"}, 800, 9000, false},
      {"Legal and Professional", {"Legal & Professional Fees", "Professional Services", "Accounting"},
       {"LEGALZOOM", "H&R BLOCK", "CPA PARTNERS", "ROCKET LAWYER"}, {"tax prep", "filing"}, 50, 1500, false},
  };
  return types;
}

const std::vector<const char*> kPrefixes = {"POS ", "ACH ", "DEBIT ", "CHECKCARD ", "PURCHASE "};
const std::vector<const char*> kCities = {" NY", " SAN JOSE CA", " AUSTIN TX", " DENVER CO", " CHICAGO IL"};
const std::vector<const char*> kCompanyWords = {"Blue",   "Harbor", "Summit", "Oak",    "Pine",   "Bright",
                                                "Iron",   "Maple",  "River",  "North",  "Golden", "Cedar"};
const std::vector<const char*> kCompanyKinds = {"Bakery",  "Plumbing", "Consulting", "Studio",  "Logistics",
                                                "Landscaping", "Dental", "Catering", "Design", "Auto Repair"};

std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), exponent);
  return w;
}

bool is_vowel(char c) { return c == 'A' || c == 'E' || c == 'I' || c == 'O' || c == 'U'; }

std::string abbreviate(std::string word, std::mt19937_64& rng) {
  if (word.size() < 5) return word;
  std::uniform_int_distribution<int> style(0, 1);
  if (style(rng) == 0) {
    std::string out(1, word[0]);
    for (std::size_t i = 1; i < word.size(); ++i)
      if (!is_vowel(word[i])) out += word[i];
    return out;
  }
  std::uniform_int_distribution<std::size_t> keep(4, word.size() - 1);
  word.resize(keep(rng));
  return word;
}

std::string describe_merchant(const std::string& merchant, double noise_rate, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution noisy(noise_rate);
  std::string entity;
  std::size_t start = 0;
  while (start <= merchant.size()) {
    std::size_t end = merchant.find(' ', start);
    if (end == std::string::npos) end = merchant.size();
    std::string word = merchant.substr(start, end - start);
    if (noisy(rng)) word = abbreviate(word, rng);
    if (!entity.empty()) entity += ' ';
    entity += word;
    start = end + 1;
  }
  if (entity.size() > 25) entity.resize(25);

  std::string out;
  if (std::bernoulli_distribution(0.25)(rng)) out += kPrefixes[std::uniform_int_distribution<std::size_t>(0, kPrefixes.size() - 1)(rng)];
  out += entity;
  if (coin(rng)) {
    std::uniform_int_distribution<int> store(100, 99999);
    out += coin(rng) ? fmt::format(" #{}", store(rng)) : fmt::format(" {:04d}", store(rng) % 10000);
  }
  if (std::bernoulli_distribution(0.3)(rng))
    out += kCities[std::uniform_int_distribution<std::size_t>(0, kCities.size() - 1)(rng)];
  return out;
}

std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()));
}

}  // namespace

void SyntheticConfig::validate() const {
  if (num_companies < 1) throw ConfigError("data.num_companies must be >= 1");
  if (min_transactions < 1 || max_transactions < min_transactions)
    throw ConfigError("data transaction range must satisfy 1 <= min <= max");
  if (min_categories < 1 || max_categories < min_categories || max_categories > category_types().size())
    throw ConfigError(fmt::format("data category range must satisfy 1 <= min <= max <= {}", category_types().size()));
  for (double r : {favourite_merchant_rate, abbreviation_noise_rate, memo_rate, name_quirk_rate, late_category_rate})
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("data rates must lie in [0, 1]");
  if (zipf_exponent < 0.0 || type_zipf_exponent < 0.0) throw ConfigError("zipf exponents must be >= 0");
}

std::size_t synthetic_merchant_count() {
  std::set<std::string> merchants;
  for (const auto& t : category_types()) merchants.insert(t.merchants.begin(), t.merchants.end());
  return merchants.size();
}

RelationalDatabase generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const auto& types = category_types();
  std::mt19937_64 rng(config.seed);
  RelationalDatabase db = RelationalDatabase::empty();

  std::vector<std::string> code_names;
  for (const auto& t : types)
    if (std::find(code_names.begin(), code_names.end(), t.code) == code_names.end()) code_names.emplace_back(t.code);
  auto code_pk = [&](const char* name) {
    const auto i = std::find(code_names.begin(), code_names.end(), name) - code_names.begin();
    return fmt::format("code-{:02d}", i + 1);
  };
  for (std::size_t i = 0; i < code_names.size(); ++i) db.add_code(fmt::format("code-{:02d}", i + 1), code_names[i]);

  // Type popularity is a fixed random permutation of the type list.
  std::vector<std::size_t> type_rank(types.size());
  std::iota(type_rank.begin(), type_rank.end(), 0);
  std::shuffle(type_rank.begin(), type_rank.end(), rng);
  const std::vector<double> type_weights = zipf_weights(types.size(), config.type_zipf_exponent);

  struct Pending {
    std::chrono::sys_days date;
    std::size_t company;
    TransactionRecord record;
  };
  std::vector<Pending> pending;
  std::size_t category_counter = 0;
  const std::chrono::sys_days origin = std::chrono::year{2023} / std::chrono::January / 1;

  for (std::size_t c = 0; c < config.num_companies; ++c) {
    const std::string company_pk = fmt::format("co-{:04d}", c + 1);
    std::uniform_int_distribution<std::size_t> word(0, kCompanyWords.size() - 1), kind(0, kCompanyKinds.size() - 1);
    db.add_company(company_pk, fmt::format("{} {} {}", kCompanyWords[word(rng)], kCompanyKinds[kind(rng)], c + 1));

    const std::size_t n_cats =
        std::uniform_int_distribution<std::size_t>(config.min_categories, config.max_categories)(rng);
    std::vector<double> w = type_weights;
    std::vector<std::size_t> chosen;
    while (chosen.size() < n_cats) {
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      const std::size_t r = pick(rng);
      chosen.push_back(type_rank[r]);
      w[r] = 0.0;
    }

    struct CompanyCategory {
      std::string pk;
      std::size_t type;
      std::vector<std::string> favourites;
    };
    std::vector<CompanyCategory> cats;
    for (std::size_t type : chosen) {
      const CategoryType& t = types[type];
      std::size_t name_type = type;
      if (std::bernoulli_distribution(config.name_quirk_rate)(rng))
        name_type = std::uniform_int_distribution<std::size_t>(0, types.size() - 1)(rng);
      const auto& names = types[name_type].names;
      const std::string name = names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)];
      const std::string pk = fmt::format("cat-{:05d}", ++category_counter);
      db.add_category(pk, company_pk, code_pk(t.code), name);

      std::vector<std::string> merchants(t.merchants.begin(), t.merchants.end());
      std::shuffle(merchants.begin(), merchants.end(), rng);
      merchants.resize(std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(3, merchants.size()))(rng));
      cats.push_back({pk, type, std::move(merchants)});
    }
    // The company's own popularity order over its categories.
    std::shuffle(cats.begin(), cats.end(), rng);
    const std::vector<double> cat_weights = zipf_weights(cats.size(), config.zipf_exponent);

    const std::size_t n_txns =
        std::uniform_int_distribution<std::size_t>(config.min_transactions, config.max_transactions)(rng);
    std::vector<std::size_t> opens(cats.size(), 0);
    for (std::size_t k = 1; k < cats.size(); ++k)
      if (std::bernoulli_distribution(config.late_category_rate)(rng))
        opens[k] = static_cast<std::size_t>(std::uniform_real_distribution<double>(0.9, 0.98)(rng) *
                                            static_cast<double>(n_txns));
    const double scale = std::exp(std::uniform_real_distribution<double>(std::log(0.5), std::log(2.0))(rng));
    std::chrono::sys_days day = origin + std::chrono::days(std::uniform_int_distribution<int>(0, 30)(rng));
    for (std::size_t i = 0; i < n_txns; ++i) {
      day += std::chrono::days(std::uniform_int_distribution<int>(0, 3)(rng));
      std::vector<double> active = cat_weights;
      for (std::size_t k = 0; k < cats.size(); ++k)
        if (opens[k] > i) active[k] = 0.0;
      const CompanyCategory& cat = cats[std::discrete_distribution<std::size_t>(active.begin(), active.end())(rng)];
      const CategoryType& t = types[cat.type];
      std::string merchant;
      if (std::bernoulli_distribution(config.favourite_merchant_rate)(rng)) {
        merchant = cat.favourites[std::uniform_int_distribution<std::size_t>(0, cat.favourites.size() - 1)(rng)];
      } else {
        merchant = t.merchants[std::uniform_int_distribution<std::size_t>(0, t.merchants.size() - 1)(rng)];
      }

      const double log_amount =
          std::uniform_real_distribution<double>(std::log(t.min_amount), std::log(t.max_amount))(rng);
      double amount = std::exp(log_amount) * scale;
      const bool refund = !t.income && std::bernoulli_distribution(0.03)(rng);
      if (!t.income && !refund) amount = -amount;

      TransactionRecord rec;
      rec.company_fk = company_pk;
      rec.category_fk = cat.pk;
      rec.description = describe_merchant(merchant, config.abbreviation_noise_rate, rng);
      rec.amount = fmt::format("{:.2f}", amount);
      if (!t.memos.empty() && std::bernoulli_distribution(config.memo_rate)(rng))
        rec.memo = t.memos[std::uniform_int_distribution<std::size_t>(0, t.memos.size() - 1)(rng)];
      rec.date = format_date(day);
      pending.push_back({day, c, std::move(rec)});
    }
  }

  std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
    if (a.date != b.date) return a.date < b.date;
    return a.company < b.company;
  });
  for (std::size_t i = 0; i < pending.size(); ++i) {
    pending[i].record.pk = fmt::format("txn-{:06d}", i + 1);
    db.add_transaction(pending[i].record);
  }
  db.reindex();
  return db;
}

}  // namespace relcat
