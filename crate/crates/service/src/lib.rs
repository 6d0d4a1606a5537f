//! Loopback HTTP backend for the authoring UI.
//!
//! [`AuthoringService::handle`] implements every endpoint over plain
//! method/target/body values so it can be driven without a socket; [`serve`]
//! puts it behind an HTTP listener on 127.0.0.1.
//!
//! | method | path | |
//! |---|---|---|
//! | GET, POST | `/api/courses` | list, create |
//! | GET | `/api/questions?course=&type=` | list records |
//! | POST | `/api/questions` | add a record |
//! | PUT, DELETE | `/api/questions/{id}` | update, remove |
//! | POST | `/api/preview` | question + dialect to GIFT text |
//! | GET | `/api/export?course=&type=&dialect=` | GIFT attachment |
//! | POST | `/api/import` | course + GIFT text |
//! | GET | `/`, `/assets/*` | embedded UI files |

use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use giftsmith::bank::{open_bank, save_bank_locked, Bank, BankError, BankLock, RecordFilter};
use giftsmith::writer::{serialize_question, WriteOptions};
use giftsmith::{validate, Diagnostic, Dialect, Question};
use serde::Deserialize;
use serde_json::{json, Value};

pub const DEFAULT_PORT: u16 = 8787;

const ASSETS: &[(&str, &str, &str)] = &[
    (
        "index.html",
        "text/html; charset=utf-8",
        include_str!("../assets/index.html"),
    ),
    (
        "style.css",
        "text/css; charset=utf-8",
        include_str!("../assets/style.css"),
    ),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub headers: Vec<(&'static str, String)>,
    pub body: Vec<u8>,
}

impl Response {
    fn json(status: u16, value: Value) -> Self {
        Response {
            status,
            content_type: "application/json",
            headers: Vec::new(),
            body: serde_json::to_vec(&value).expect("json values serialize"),
        }
    }

    fn diagnostics(status: u16, diagnostics: &[Diagnostic]) -> Self {
        Self::json(status, json!({ "diagnostics": diagnostics }))
    }

    fn problem(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self::diagnostics(status, &[Diagnostic::error(code, message)])
    }

    pub fn json_body(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

fn bank_error(e: BankError) -> Response {
    match e {
        BankError::Invalid(d) => Response::diagnostics(400, &d),
        BankError::InvalidCourseId(_) | BankError::EmptySubject => {
            Response::problem(400, "invalid_course", e.to_string())
        }
        BankError::CourseExists(_) => Response::problem(409, "course_exists", e.to_string()),
        BankError::UnknownCourse(_) => Response::problem(404, "unknown_course", e.to_string()),
        BankError::UnknownRecord(_) => Response::problem(404, "unknown_record", e.to_string()),
        other => Response::problem(500, "persistence", other.to_string()),
    }
}

#[derive(Deserialize)]
struct NewCourse {
    course_id: String,
    subject: String,
}

#[derive(Deserialize)]
struct NewQuestion {
    course_id: String,
    question: Question,
    #[serde(default)]
    dialect: Dialect,
}

#[derive(Deserialize)]
struct QuestionUpdate {
    question: Question,
    #[serde(default)]
    dialect: Dialect,
}

#[derive(Deserialize)]
struct Preview {
    question: Question,
    #[serde(default)]
    dialect: Dialect,
}

#[derive(Deserialize)]
struct Import {
    course_id: String,
    text: String,
    #[serde(default)]
    dialect: Dialect,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body)
        .map_err(|e| Response::problem(400, "bad_request", format!("invalid request body: {e}")))
}

struct Query(Vec<(String, String)>);

impl Query {
    fn parse(query: &str) -> Self {
        Query(
            form_urlencoded::parse(query.as_bytes())
                .into_owned()
                .collect(),
        )
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, v)| k == key && !v.is_empty())
            .map(|(_, v)| v.as_str())
    }

    fn filter(&self) -> Result<RecordFilter, Response> {
        let qtype_code = match self.get("type") {
            Some(t) => Some(
                t.parse::<u8>()
                    .ok()
                    .filter(|c| (1..=6).contains(c))
                    .ok_or_else(|| {
                        Response::problem(
                            400,
                            "bad_type",
                            format!("`{t}` is not a question type code 1-6"),
                        )
                    })?,
            ),
            None => None,
        };
        Ok(RecordFilter {
            course_id: self.get("course").map(str::to_string),
            qtype_code,
            title_substring: self.get("title").map(str::to_string),
        })
    }

    fn dialect(&self) -> Result<Dialect, Response> {
        self.get("dialect").map_or(Ok(Dialect::default()), |d| {
            d.parse()
                .map_err(|e: String| Response::problem(400, "bad_dialect", e))
        })
    }
}

/// Bank state shared by request handlers. Reads see the last committed bank;
/// mutations are serialized and persisted before they become visible.
pub struct AuthoringService {
    path: PathBuf,
    current: RwLock<Arc<Bank>>,
    writer: Mutex<BankLock>,
}

impl AuthoringService {
    /// Open the bank at `path` and hold its writer lock until the service is dropped.
    pub fn open(path: &Path) -> Result<Self, BankError> {
        let lock = BankLock::acquire(path)?;
        let bank = open_bank(path)?;
        Ok(AuthoringService {
            path: path.to_path_buf(),
            current: RwLock::new(Arc::new(bank)),
            writer: Mutex::new(lock),
        })
    }

    pub fn snapshot(&self) -> Arc<Bank> {
        self.current.read().expect("bank lock poisoned").clone()
    }

    fn mutate<T>(
        &self,
        f: impl FnOnce(&Bank) -> Result<(Bank, T), BankError>,
    ) -> Result<(Arc<Bank>, T), Response> {
        let _writer = self.writer.lock().expect("writer lock poisoned");
        let (next, out) = f(&self.snapshot()).map_err(bank_error)?;
        save_bank_locked(&next, &self.path).map_err(bank_error)?;
        let next = Arc::new(next);
        *self.current.write().expect("bank lock poisoned") = next.clone();
        Ok((next, out))
    }

    pub fn handle(&self, method: &str, target: &str, body: &[u8]) -> Response {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        let query = Query::parse(query);
        let segments: Vec<&str> = path
            .trim_matches('/')
            .split('/')
            .filter(|s| !s.is_empty())
            .collect();
        let result = match (method, segments.as_slice()) {
            ("GET", []) => Ok(asset("index.html")),
            ("GET", ["assets", name]) => Ok(asset(name)),
            ("GET", ["api", "courses"]) => Ok(Response::json(
                200,
                json!({ "courses": self.snapshot().courses }),
            )),
            ("POST", ["api", "courses"]) => self.create_course(body),
            ("GET", ["api", "questions"]) => self.list_questions(&query),
            ("POST", ["api", "questions"]) => self.add_question(body),
            ("PUT", ["api", "questions", id]) => self.update_question(id, body),
            ("DELETE", ["api", "questions", id]) => self.remove_question(id),
            ("POST", ["api", "preview"]) => preview(body),
            ("GET", ["api", "export"]) => self.export(&query),
            ("POST", ["api", "import"]) => self.import(body),
            (_, ["api", "courses" | "questions" | "preview" | "export" | "import"])
            | (_, ["api", "questions", _]) => Err(Response::problem(
                405,
                "method_not_allowed",
                format!("{method} is not supported on {path}"),
            )),
            _ => Err(Response::problem(
                404,
                "not_found",
                format!("no resource at {path}"),
            )),
        };
        result.unwrap_or_else(|r| r)
    }

    fn create_course(&self, body: &[u8]) -> Result<Response, Response> {
        let req: NewCourse = parse_body(body)?;
        let (bank, ()) =
            self.mutate(|b| Ok((b.create_course(&req.course_id, &req.subject)?, ())))?;
        Ok(Response::json(
            201,
            json!({ "course": bank.course(&req.course_id) }),
        ))
    }

    fn list_questions(&self, query: &Query) -> Result<Response, Response> {
        let filter = query.filter()?;
        let bank = self.snapshot();
        Ok(Response::json(
            200,
            json!({ "records": bank.list_records(&filter) }),
        ))
    }

    fn add_question(&self, body: &[u8]) -> Result<Response, Response> {
        let req: NewQuestion = parse_body(body)?;
        let (bank, id) =
            self.mutate(|b| b.add_question(&req.course_id, req.question, req.dialect))?;
        Ok(Response::json(201, json!({ "record": bank.record(id) })))
    }

    fn record_id(id: &str) -> Result<u64, Response> {
        id.parse()
            .map_err(|_| Response::problem(404, "unknown_record", format!("unknown record: {id}")))
    }

    fn update_question(&self, id: &str, body: &[u8]) -> Result<Response, Response> {
        let id = Self::record_id(id)?;
        let req: QuestionUpdate = parse_body(body)?;
        let (bank, ()) =
            self.mutate(|b| Ok((b.update_question(id, req.question, req.dialect)?, ())))?;
        Ok(Response::json(200, json!({ "record": bank.record(id) })))
    }

    fn remove_question(&self, id: &str) -> Result<Response, Response> {
        let id = Self::record_id(id)?;
        self.mutate(|b| Ok((b.remove_question(id)?, ())))?;
        Ok(Response::json(200, json!({ "deleted": id })))
    }

    fn export(&self, query: &Query) -> Result<Response, Response> {
        let filter = query.filter()?;
        let dialect = query.dialect()?;
        let bank = self.snapshot();
        if let Some(course) = &filter.course_id {
            if bank.course(course).is_none() {
                return Err(bank_error(BankError::UnknownCourse(course.clone())));
            }
        }
        let name = filter.course_id.as_deref().unwrap_or("bank");
        Ok(Response {
            status: 200,
            content_type: "text/plain; charset=utf-8",
            headers: vec![(
                "content-disposition",
                format!("attachment; filename=\"{name}.gift\""),
            )],
            body: bank.export_gift(&filter, dialect).into_bytes(),
        })
    }

    fn import(&self, body: &[u8]) -> Result<Response, Response> {
        let req: Import = parse_body(body)?;
        let (_, outcome) = self.mutate(|b| {
            let out = b.import_gift(&req.course_id, &req.text, req.dialect)?;
            Ok((out.bank.clone(), out))
        })?;
        let failed = outcome.record_ids.is_empty()
            && giftsmith::diagnostic::has_errors(&outcome.diagnostics);
        Ok(Response::json(
            if failed { 400 } else { 200 },
            json!({ "record_ids": outcome.record_ids, "diagnostics": outcome.diagnostics }),
        ))
    }
}

fn preview(body: &[u8]) -> Result<Response, Response> {
    let req: Preview = parse_body(body)?;
    let text = serialize_question(&req.question, req.dialect, &WriteOptions::default())
        .map_err(|e| Response::diagnostics(400, e.diagnostics()))?;
    let warnings = validate(&req.question, req.dialect);
    Ok(Response::json(
        200,
        json!({ "gift": text, "diagnostics": warnings }),
    ))
}

fn asset(name: &str) -> Response {
    match ASSETS.iter().find(|(n, _, _)| *n == name) {
        Some((_, content_type, body)) => Response {
            status: 200,
            content_type,
            headers: Vec::new(),
            body: body.as_bytes().to_vec(),
        },
        None => Response::problem(404, "not_found", format!("no asset named {name}")),
    }
}

/// Serve on 127.0.0.1:`port` until the process exits. Calls `ready` with the
/// bound address once the listener is up.
pub async fn serve(
    service: Arc<AuthoringService>,
    port: u16,
    ready: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    use axum::body::Bytes;
    use axum::http::{header, HeaderValue, Method, StatusCode, Uri};
    use axum::response::IntoResponse;

    let listener = tokio::net::TcpListener::bind((Ipv4Addr::LOCALHOST, port)).await?;
    ready(listener.local_addr()?);
    let app = axum::Router::new().fallback(move |method: Method, uri: Uri, body: Bytes| {
        let service = service.clone();
        async move {
            let target = uri
                .path_and_query()
                .map_or(uri.path(), |pq| pq.as_str())
                .to_string();
            let response = tokio::task::spawn_blocking(move || {
                service.handle(method.as_str(), &target, &body)
            })
            .await
            .unwrap_or_else(|e| Response::problem(500, "internal", e.to_string()));
            let mut out = (
                StatusCode::from_u16(response.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
                response.body,
            )
                .into_response();
            out.headers_mut().insert(
                header::CONTENT_TYPE,
                HeaderValue::from_static(response.content_type),
            );
            for (name, value) in response.headers {
                if let Ok(v) = HeaderValue::from_str(&value) {
                    out.headers_mut().insert(name, v);
                }
            }
            out
        }
    });
    axum::serve(listener, app).await
}

/// Blocking entry point used by the CLI's `serve` command.
pub fn serve_blocking(
    path: &Path,
    port: u16,
    ready: impl FnOnce(SocketAddr),
) -> Result<(), String> {
    let service = Arc::new(AuthoringService::open(path).map_err(|e| e.to_string())?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    runtime
        .block_on(serve(service, port, ready))
        .map_err(|e| e.to_string())
}
