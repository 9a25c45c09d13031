use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UserStatus {
    #[default]
    Active,
    Blacklisted,
}

/// Registration data entered at login. Education and relief-course fields are
/// stored verbatim; detection does not read them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub identity: String,
    #[serde(default)]
    pub education_level: String,
    #[serde(default)]
    pub relief_courses: Vec<String>,
    #[serde(default)]
    pub prior_participation: String,
    #[serde(default)]
    pub status: UserStatus,
}

impl UserProfile {
    pub fn new(user_id: impl Into<String>, identity: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            identity: identity.into(),
            education_level: String::new(),
            relief_courses: Vec::new(),
            prior_participation: String::new(),
            status: UserStatus::Active,
        }
    }

    pub fn is_blacklisted(&self) -> bool {
        self.status == UserStatus::Blacklisted
    }

    /// One-way transition; blacklisting is never undone.
    pub fn blacklist(&mut self) {
        self.status = UserStatus::Blacklisted;
    }
}
