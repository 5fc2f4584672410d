//! Single-port control plane over plain TCP with newline-delimited frames.
//!
//! One reader/writer pair per connection. A connection can register node
//! capabilities (merged into its registry until disconnect), invoke tools
//! against its own device session, and submit tasks; task runs stream
//! task.event frames in trace order and finish with a task.report frame.
//! External planners answer plan.request frames on the same connection.

use std::cell::RefCell;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use agent_core::assets::Assets;
use agent_core::backends::{deterministic_execute, direct_ui_execute, ui_agent_execute, Action};
use agent_core::device::DeviceState;
use agent_core::error::Error as CoreError;
use agent_core::goal::GoalPredicate;
use agent_core::memory::MemoryStore;
use agent_core::orchestrator::{run_task, SessionConfig};
use agent_core::planner::{ObservationPacket, Planner, PlannerReply, ScriptedPlanner};
use agent_core::registry::{BackendClass, Capability, CapabilityRegistry};
use agent_core::rng::mix_seed;
use agent_core::digest::fnv64;
use agent_core::scheduler::SchedulePolicy;

use crate::frame::{decode_frame, encode_frame, Frame, FrameBody, FrameError};

pub struct Gateway {
    addr: SocketAddr,
}

impl Gateway {
    /// Bind and start accepting connections on a detached thread.
    pub fn serve(bind: &str, assets: Assets) -> std::io::Result<Gateway> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        let assets = Arc::new(assets);
        let sessions = Arc::new(AtomicU64::new(1));
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let assets = assets.clone();
                let sessions = sessions.clone();
                std::thread::spawn(move || {
                    let _ = handle_connection(stream, &assets, &sessions);
                });
            }
        });
        Ok(Gateway { addr })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

struct ConnState {
    registry: CapabilityRegistry,
    device: DeviceState,
    last_client_id: Option<u64>,
    next_server_id: u64,
}

fn handle_connection(
    stream: TcpStream,
    assets: &Assets,
    sessions: &AtomicU64,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let writer = Rc::new(RefCell::new(stream));
    let mut state = ConnState {
        registry: assets.registry.clone(),
        device: DeviceState::load(assets.catalog.clone(), assets.profile.clone()),
        last_client_id: None,
        next_server_id: 1,
    };

    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            // Disconnect: node capabilities from this connection die here.
            return Ok(());
        }
        let frame = match decode_frame(line.as_bytes()) {
            Ok(frame) => frame,
            Err(err) => {
                let code = match err {
                    FrameError::Framing(_) => "bad-frame",
                    FrameError::Schema(_) => "bad-schema",
                };
                send(&writer, &mut state, None, FrameBody::Error {
                    code: code.into(),
                    message: err.to_string(),
                })?;
                continue;
            }
        };
        if let Some(last) = state.last_client_id {
            if frame.id <= last {
                send(&writer, &mut state, Some(frame.id), FrameBody::Error {
                    code: "bad-id".into(),
                    message: format!("ids must strictly increase (last {last}, got {})", frame.id),
                })?;
                continue;
            }
        }
        state.last_client_id = Some(frame.id);
        handle_frame(frame, &writer, &mut state, assets, sessions, &mut reader)?;
    }
}

fn send(
    writer: &Rc<RefCell<TcpStream>>,
    state: &mut ConnState,
    in_reply_to: Option<u64>,
    body: FrameBody,
) -> std::io::Result<()> {
    let id = state.next_server_id;
    state.next_server_id += 1;
    let frame = Frame { id, in_reply_to, body };
    let bytes = encode_frame(&frame)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    writer.borrow_mut().write_all(&bytes)
}

fn handle_frame(
    frame: Frame,
    writer: &Rc<RefCell<TcpStream>>,
    state: &mut ConnState,
    assets: &Assets,
    sessions: &AtomicU64,
    reader: &mut BufReader<TcpStream>,
) -> std::io::Result<()> {
    match frame.body {
        FrameBody::Hello { client } => send(writer, state, Some(frame.id), FrameBody::Hello {
            client: format!("gateway (hello {client})"),
        }),
        FrameBody::NodeRegister { node_id, capabilities } => {
            for cap in capabilities {
                let added = state.registry.add(Capability {
                    verb: cap.verb.clone(),
                    backend: cap.backend,
                    cost_per_call: cap.cost,
                    reliability_class: cap.reliability,
                });
                if let Err(err) = added {
                    return send(writer, state, Some(frame.id), FrameBody::Error {
                        code: "bad-capability".into(),
                        message: err.to_string(),
                    });
                }
            }
            send(writer, state, Some(frame.id), FrameBody::Hello {
                client: format!("registered {node_id}"),
            })
        }
        FrameBody::ToolInvoke { verb, args } => {
            let caps = state.registry.lookup(&verb);
            let Some(cap) = caps.first() else {
                return send(writer, state, Some(frame.id), FrameBody::ToolResult {
                    status: "rejected".into(),
                    detail: "unsupported verb".into(),
                    ticks_spent: 0,
                });
            };
            let action = Action {
                verb: verb.clone(),
                args,
                expected_post: GoalPredicate::Always,
                budget: 15 * assets.costs.ui_micro_step,
                deadline: state.device.clock() + 10_000,
            };
            let local = assets.registry.capability(&verb, cap.backend).is_some();
            let result = if !local {
                // Node-registered capability: selection sees it, but remote
                // execution is not bridged.
                return send(writer, state, Some(frame.id), FrameBody::ToolResult {
                    status: "rejected".into(),
                    detail: "node-registered capability has no local executor".into(),
                    ticks_spent: 0,
                });
            } else {
                match cap.backend {
                    BackendClass::Deterministic => {
                        deterministic_execute(&action, &mut state.device, &assets.costs)
                    }
                    BackendClass::UiAgent => ui_agent_execute(&action, &mut state.device, &assets.costs),
                    BackendClass::DirectUi => direct_ui_execute(&action, &mut state.device, &assets.costs),
                }
            };
            send(writer, state, Some(frame.id), FrameBody::ToolResult {
                status: format!("{:?}", result.status).to_lowercase(),
                detail: result.detail,
                ticks_spent: result.ticks_spent,
            })
        }
        FrameBody::TaskSubmit { task_id, policy, seed, timeout_ticks, planner } => {
            let session = sessions.fetch_add(1, Ordering::SeqCst);
            let result = run_submitted_task(
                writer, state, assets, reader, session, &task_id, &policy, seed, timeout_ticks,
                planner.as_deref(),
            );
            match result {
                Ok(report) => send(writer, state, Some(frame.id), FrameBody::TaskReport {
                    session,
                    report,
                }),
                Err(err) => send(writer, state, Some(frame.id), FrameBody::Error {
                    code: "task-failed".into(),
                    message: err.to_string(),
                }),
            }
        }
        FrameBody::PlanReply { .. } => send(writer, state, Some(frame.id), FrameBody::Error {
            code: "unexpected-frame".into(),
            message: "plan.reply outside an active plan.request".into(),
        }),
        other => send(writer, state, Some(frame.id), FrameBody::Error {
            code: "unexpected-frame".into(),
            message: format!("{} is server-sent", other.kind()),
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_submitted_task(
    writer: &Rc<RefCell<TcpStream>>,
    state: &mut ConnState,
    assets: &Assets,
    reader: &mut BufReader<TcpStream>,
    session: u64,
    task_id: &str,
    policy_name: &str,
    seed: u64,
    timeout_ticks: Option<u64>,
    planner_mode: Option<&str>,
) -> Result<serde_json::Value, CoreError> {
    let task = assets.task(task_id)?.clone();
    let mut policy = SchedulePolicy::from_name(policy_name)
        .ok_or_else(|| CoreError::Config(format!("unknown policy '{policy_name}'")))?;
    if let Some(t) = timeout_ticks {
        policy = policy.with_timeout(t);
    }
    let profile = assets.profile.clone().with_seed(mix_seed(seed, fnv64(task_id.as_bytes())));
    let mut device = DeviceState::load(assets.catalog.clone(), profile);
    let mut memory = MemoryStore::from_lines(&assets.memory_seed)?;
    let session_cfg = SessionConfig { seed, ..Default::default() };

    // Stream every trace append as a task.event frame, in order.
    let event_writer = writer.clone();
    let event_ids = RefCell::new(0u64);
    let base_id = state.next_server_id;
    let mut sink = |event: &agent_core::trace::TraceEvent| {
        let mut ids = event_ids.borrow_mut();
        *ids += 1;
        let frame = Frame::new(base_id + *ids - 1, FrameBody::TaskEvent {
            session,
            event: serde_json::to_value(event).unwrap_or(serde_json::Value::Null),
        });
        if let Ok(bytes) = encode_frame(&frame) {
            let _ = event_writer.borrow_mut().write_all(&bytes);
        }
    };

    let report = if planner_mode == Some("external") {
        let mut planner = ExternalPlanner {
            writer: writer.clone(),
            reader,
            session,
            next_id: RefCell::new(1_000_000 + session * 1_000),
        };
        run_task(
            &task, &policy, &mut planner, &mut device, &mut memory, &state.registry,
            &assets.costs, &session_cfg, Some(&mut sink),
        )?
    } else {
        let mut planner = if policy.kind == agent_core::scheduler::PolicyKind::UiOnly
            && !task.oneshot.is_empty()
        {
            ScriptedPlanner::one_shot(task.oneshot.clone(), task.rules.clone())
        } else {
            ScriptedPlanner::new(task.rules.clone())
        };
        run_task(
            &task, &policy, &mut planner, &mut device, &mut memory, &state.registry,
            &assets.costs, &session_cfg, Some(&mut sink),
        )?
    };
    state.next_server_id = base_id + event_ids.into_inner();
    serde_json::to_value(&report).map_err(|e| CoreError::Config(e.to_string()))
}

/// Planner adapter speaking plan.request / plan.reply over the connection.
struct ExternalPlanner<'a> {
    writer: Rc<RefCell<TcpStream>>,
    reader: &'a mut BufReader<TcpStream>,
    session: u64,
    next_id: RefCell<u64>,
}

impl Planner for ExternalPlanner<'_> {
    fn plan_turn(&mut self, observation: &ObservationPacket) -> agent_core::Result<PlannerReply> {
        let mut id_ref = self.next_id.borrow_mut();
        let request_id = *id_ref;
        *id_ref += 1;
        drop(id_ref);
        let frame = Frame::new(request_id, FrameBody::PlanRequest {
            session: self.session,
            observation: serde_json::to_value(observation)
                .map_err(|e| CoreError::PlannerAbort(e.to_string()))?,
        });
        let bytes = encode_frame(&frame).map_err(|e| CoreError::PlannerAbort(e.to_string()))?;
        self.writer
            .borrow_mut()
            .write_all(&bytes)
            .map_err(|e| CoreError::PlannerAbort(e.to_string()))?;
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .map_err(|e| CoreError::PlannerAbort(e.to_string()))?;
        if n == 0 {
            return Err(CoreError::PlannerAbort("planner connection closed".into()));
        }
        let reply =
            decode_frame(line.as_bytes()).map_err(|e| CoreError::PlannerAbort(e.to_string()))?;
        match reply.body {
            FrameBody::PlanReply { reply, .. } if reply_matches(reply.clone()).is_some() => {
                Ok(reply_matches(reply).unwrap())
            }
            FrameBody::PlanReply { .. } => {
                Err(CoreError::PlannerAbort("plan.reply payload malformed".into()))
            }
            other => Err(CoreError::PlannerAbort(format!(
                "expected plan.reply, got {}",
                other.kind()
            ))),
        }
    }
}

fn reply_matches(value: serde_json::Value) -> Option<PlannerReply> {
    serde_json::from_value(value).ok()
}
