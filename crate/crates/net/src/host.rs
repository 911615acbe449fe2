use std::net::SocketAddr;
use std::time::Duration;

use axum::Router;
use axum_server::tls_rustls::RustlsConfig;
use axum_server::Handle;
use tokio::task::JoinHandle;

use crate::NetError;

/// An HTTP service bound to a fixed socket address that can be taken off
/// the network and brought back on the same address.
///
/// Severing shuts the listener down and drops every open connection, so
/// clients observe real connection failures.
pub struct ServiceHost {
    name: String,
    router: Router,
    tls: Option<RustlsConfig>,
    addr: SocketAddr,
    running: Option<Running>,
}

struct Running {
    handle: Handle<SocketAddr>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServiceHost {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub async fn start(
        name: impl Into<String>,
        router: Router,
        addr: SocketAddr,
        tls: Option<RustlsConfig>,
    ) -> Result<Self, NetError> {
        let mut host = ServiceHost {
            name: name.into(),
            router,
            tls,
            addr,
            running: None,
        };
        host.launch().await?;
        Ok(host)
    }

    async fn launch(&mut self) -> Result<(), NetError> {
        let handle = Handle::<SocketAddr>::new();
        let service = self.router.clone().into_make_service();
        let task = match &self.tls {
            Some(config) => {
                let server = axum_server::bind_rustls(self.addr, config.clone()).handle(handle.clone());
                tokio::spawn(async move { server.serve(service).await })
            }
            None => {
                let server = axum_server::bind(self.addr).handle(handle.clone());
                tokio::spawn(async move { server.serve(service).await })
            }
        };
        match handle.listening().await {
            Some(bound) => {
                self.addr = bound;
                self.running = Some(Running { handle, task });
                log::debug!("{} listening on {}", self.name, bound);
                Ok(())
            }
            None => {
                let err = match task.await {
                    Ok(Err(e)) => NetError::Io(e),
                    _ => NetError::Bind(self.name.clone()),
                };
                Err(err)
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        let scheme = if self.tls.is_some() { "https" } else { "http" };
        match self.addr {
            SocketAddr::V4(a) if a.ip().is_unspecified() => {
                format!("{scheme}://127.0.0.1:{}", a.port())
            }
            other => format!("{scheme}://{other}"),
        }
    }

    pub fn is_running(&self) -> bool {
        self.running.is_some()
    }

    /// Stops the listener and closes all connections immediately.
    pub async fn sever(&mut self) -> Result<(), NetError> {
        let Some(running) = self.running.take() else {
            return Err(NetError::NotRunning(self.name.clone()));
        };
        running.handle.shutdown();
        // serve() returns once the accept loop has stopped.
        let _ = tokio::time::timeout(Duration::from_secs(5), running.task).await;
        log::debug!("{} severed", self.name);
        Ok(())
    }

    /// Rebinds the original address after [`sever`](Self::sever).
    pub async fn restore(&mut self) -> Result<(), NetError> {
        if self.running.is_some() {
            return Ok(());
        }
        self.launch().await
    }

    /// Serves until the task ends (used by the long-running CLI servers).
    pub async fn wait(mut self) -> Result<(), NetError> {
        match self.running.take() {
            Some(r) => match r.task.await {
                Ok(res) => Ok(res?),
                Err(e) => Err(NetError::Io(std::io::Error::other(e))),
            },
            None => Err(NetError::NotRunning(self.name.clone())),
        }
    }
}

impl Drop for ServiceHost {
    fn drop(&mut self) {
        if let Some(running) = self.running.take() {
            running.handle.shutdown();
        }
    }
}
