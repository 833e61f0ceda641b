//! WebUI page composition.
//!
//! The WebUI decides which parts a page needs under the current
//! configuration, fans out one sub-request per part, and assembles whatever
//! came back. A failed catalog part turns the page into a maintenance page;
//! any other failed part just leaves its section out.

use serde::{Deserialize, Serialize};

use super::auth::{AuthError, Session};
use super::data::{CategoryId, ProductId};
use super::image::{ImageBlob, SizeLabel};
use super::persistence::{Query, Rows};
use crate::variability::Configuration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    ProductPage,
    CategoryPage,
    Login,
    AddToCart,
}

impl RequestKind {
    pub const ALL: [RequestKind; 4] = [Self::ProductPage, Self::CategoryPage, Self::Login, Self::AddToCart];

    pub fn name(self) -> &'static str {
        match self {
            Self::ProductPage => "product_page",
            Self::CategoryPage => "category_page",
            Self::Login => "login",
            Self::AddToCart => "add_to_cart",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientRequest {
    pub kind: RequestKind,
    /// Client session id, used for rate limiting and traffic statistics.
    pub client: String,
    pub product: ProductId,
    pub category: CategoryId,
    pub token: Option<Session>,
    pub credentials: Option<Credentials>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WebUiMode {
    Normal,
    Maintenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Catalog,
    Image,
    Recommendations,
    Auth,
}

/// Parts a page needs under `config`. Parts for inactive services never
/// appear, so a disabled recommender or absent auth is never contacted.
pub fn parts(kind: RequestKind, config: &Configuration) -> Vec<Part> {
    let mut out = vec![Part::Catalog];
    let browsing = kind != RequestKind::Login;
    if browsing {
        out.push(Part::Image);
    }
    if browsing && config.recommender.is_active() {
        out.push(Part::Recommendations);
    }
    if config.auth.is_active() {
        out.push(Part::Auth);
    }
    out
}

pub fn catalog_query(req: &ClientRequest) -> Query {
    match req.kind {
        RequestKind::ProductPage | RequestKind::AddToCart => Query::ProductById { id: req.product },
        RequestKind::CategoryPage => Query::ByCategory { category: req.category },
        RequestKind::Login => Query::Categories,
    }
}

pub fn image_size(kind: RequestKind) -> SizeLabel {
    match kind {
        RequestKind::ProductPage => SizeLabel::S256,
        _ => SizeLabel::S64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoginOutcome {
    Success,
    BadCredentials,
    RateLimited,
    AuthDisabled,
    /// Auth did not answer in time or its breaker rejected the call.
    Unavailable,
}

impl From<AuthError> for LoginOutcome {
    fn from(e: AuthError) -> Self {
        match e {
            AuthError::BadCredentials => Self::BadCredentials,
            AuthError::RateLimited => Self::RateLimited,
            AuthError::AuthDisabled => Self::AuthDisabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub product: ProductId,
    pub size: SizeLabel,
    pub placeholder: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sections {
    /// Number of catalog rows on the page.
    pub catalog: usize,
    pub image: Option<ImageInfo>,
    pub recommendations: Option<Vec<ProductId>>,
    pub login_widget: bool,
    pub anonymous_banner: bool,
    pub login: Option<LoginOutcome>,
    /// Updated session for the client to carry.
    pub session: Option<Session>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageStatus {
    Ok,
    Maintenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageResponse {
    pub status: PageStatus,
    pub sections: Option<Sections>,
}

impl PageResponse {
    pub fn maintenance() -> Self {
        Self { status: PageStatus::Maintenance, sections: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthReply {
    Valid(bool),
    Login(Result<Session, AuthError>),
    Cart(Option<Session>),
}

/// What came back for each part; `Some(None)` is a failed part.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartResults {
    pub catalog: Option<Option<Rows>>,
    pub image: Option<Option<ImageBlob>>,
    pub recommendations: Option<Option<Vec<ProductId>>>,
    pub auth: Option<Option<AuthReply>>,
}

pub fn assemble(req: &ClientRequest, config: &Configuration, results: PartResults) -> PageResponse {
    let Some(Some(rows)) = results.catalog else {
        return PageResponse::maintenance();
    };
    let auth_active = config.auth.is_active();
    let mut login = None;
    let mut session = None;
    match results.auth.flatten() {
        Some(AuthReply::Login(Ok(s))) => {
            login = Some(LoginOutcome::Success);
            session = Some(s);
        }
        Some(AuthReply::Login(Err(e))) => login = Some(e.into()),
        Some(AuthReply::Cart(s)) => session = s,
        Some(AuthReply::Valid(_)) | None => {}
    }
    if req.kind == RequestKind::Login && login.is_none() {
        login = Some(if auth_active { LoginOutcome::Unavailable } else { LoginOutcome::AuthDisabled });
    }
    PageResponse {
        status: PageStatus::Ok,
        sections: Some(Sections {
            catalog: rows.len(),
            image: results
                .image
                .flatten()
                .map(|b| ImageInfo { product: b.product, size: b.size, placeholder: b.placeholder }),
            recommendations: results.recommendations.flatten(),
            login_widget: auth_active,
            anonymous_banner: !auth_active,
            login,
            session,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::image::placeholder;
    use crate::variability::{canonical_level, Level};

    fn req(kind: RequestKind) -> ClientRequest {
        ClientRequest {
            kind,
            client: "s1".into(),
            product: ProductId(1),
            category: CategoryId(0),
            token: None,
            credentials: None,
        }
    }

    #[test]
    fn parts_follow_configuration() {
        let l0 = canonical_level(Level::L0Barebone);
        let l2 = canonical_level(Level::L2Full);
        assert_eq!(parts(RequestKind::ProductPage, &l0), vec![Part::Catalog, Part::Image]);
        assert_eq!(
            parts(RequestKind::ProductPage, &l2),
            vec![Part::Catalog, Part::Image, Part::Recommendations, Part::Auth]
        );
        assert_eq!(parts(RequestKind::Login, &l0), vec![Part::Catalog]);
    }

    #[test]
    fn l0_product_page_is_anonymous_with_placeholder() {
        let l0 = canonical_level(Level::L0Barebone);
        let r = req(RequestKind::ProductPage);
        let page = assemble(
            &r,
            &l0,
            PartResults {
                catalog: Some(Some(Rows::Products(vec![]))),
                image: Some(Some(placeholder(ProductId(1), SizeLabel::S256))),
                ..Default::default()
            },
        );
        let s = page.sections.unwrap();
        assert_eq!(page.status, PageStatus::Ok);
        assert!(s.image.unwrap().placeholder);
        assert!(s.anonymous_banner && !s.login_widget);
        assert_eq!(s.recommendations, None);
    }

    #[test]
    fn failed_catalog_gives_maintenance_without_sections() {
        let l2 = canonical_level(Level::L2Full);
        let page = assemble(&req(RequestKind::ProductPage), &l2, PartResults { catalog: Some(None), ..Default::default() });
        assert_eq!(page, PageResponse::maintenance());
    }

    #[test]
    fn login_without_auth_is_disabled() {
        let l0 = canonical_level(Level::L0Barebone);
        let page = assemble(
            &req(RequestKind::Login),
            &l0,
            PartResults { catalog: Some(Some(Rows::Categories(vec![]))), ..Default::default() },
        );
        assert_eq!(page.sections.unwrap().login, Some(LoginOutcome::AuthDisabled));
    }

    #[test]
    fn failed_recommendations_drop_the_section() {
        let l2 = canonical_level(Level::L2Full);
        let page = assemble(
            &req(RequestKind::ProductPage),
            &l2,
            PartResults {
                catalog: Some(Some(Rows::Products(vec![]))),
                recommendations: Some(None),
                ..Default::default()
            },
        );
        let s = page.sections.unwrap();
        assert!(s.recommendations.is_none() && s.login_widget);
    }
}
