/**
 * ViewState: everything the console renders, derived purely from gateway
 * responses. The operations here (sendMessage, uploadAudio, clearHistory)
 * return fresh states; no business logic lives client-side.
 */

import {
  ArtifactView,
  ChatResult,
  GatewayClient,
  PlanNode,
  SessionView,
  TraceEvent,
  TurnView,
} from "./api.js";

export type NodeStatus = "pending" | "ready" | "running" | "done" | "failed";

export interface PlanBadge {
  id: string;
  task: string;
  deps: string[];
  status: NodeStatus;
  detail: string;
}

export interface ViewState {
  sessionId: string;
  turns: TurnView[];
  plan: PlanBadge[];
  gallery: ArtifactView[];
  degraded: boolean;
  inFlight: boolean;
  error: string | null;
}

export function emptyViewState(sessionId: string): ViewState {
  return {
    sessionId,
    turns: [],
    plan: [],
    gallery: [],
    degraded: false,
    inFlight: false,
    error: null,
  };
}

const TERMINAL: NodeStatus[] = ["done", "failed"];

/** Latest status per subtask from the append-only event trace. */
export function planBadges(plan: PlanNode[], trace: TraceEvent[]): PlanBadge[] {
  const latest = new Map<string, TraceEvent>();
  for (const event of trace) latest.set(event.subtask, event);
  return plan.map((node) => {
    const event = latest.get(node.id);
    return {
      id: node.id,
      task: node.task,
      deps: [...node.deps].sort(),
      status: (event?.status ?? "pending") as NodeStatus,
      detail: event?.detail ?? "",
    };
  });
}

export function allTerminal(badges: PlanBadge[]): boolean {
  return badges.every((b) => TERMINAL.includes(b.status));
}

function mergeGallery(gallery: ArtifactView[], incoming: ArtifactView[]): ArtifactView[] {
  const known = new Set(gallery.map((a) => a.id));
  return [...gallery, ...incoming.filter((a) => !known.has(a.id))];
}

export function applyChatResult(state: ViewState, result: ChatResult): ViewState {
  return {
    ...state,
    plan: planBadges(result.plan, result.trace),
    gallery: mergeGallery(state.gallery, result.artifacts),
    degraded: result.degraded,
    error: null,
  };
}

export function applySessionView(state: ViewState, view: SessionView): ViewState {
  return {
    ...state,
    turns: view.turns,
    gallery: mergeGallery(state.gallery, view.artifacts),
  };
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

/**
 * POST /chat, render the plan, then poll session state until every subtask
 * is terminal (the gateway executes synchronously, so typically one poll).
 */
export async function sendMessage(
  client: GatewayClient,
  state: ViewState,
  text: string,
  pollMs = 1000,
): Promise<ViewState> {
  if (!text.trim()) throw new Error("message must be nonempty");
  if (state.inFlight) throw new Error("a request is already in flight");
  let next: ViewState = { ...state, inFlight: true, error: null };
  try {
    const result = await client.chat(state.sessionId, text);
    next = applyChatResult(next, result);
    while (!allTerminal(next.plan)) {
      await sleep(pollMs);
      next = applySessionView(next, await client.session(state.sessionId));
    }
    next = applySessionView(next, await client.session(state.sessionId));
    return { ...next, inFlight: false };
  } catch (err) {
    // Network/gateway failure: keep prior content, surface a retryable error.
    return { ...state, inFlight: false, error: String(err) };
  }
}

export async function uploadAudio(
  client: GatewayClient,
  state: ViewState,
  data: Blob,
  filename: string,
): Promise<ViewState> {
  try {
    const view = await client.upload(state.sessionId, data, filename, "audio");
    return { ...state, gallery: mergeGallery(state.gallery, [view]), error: null };
  } catch (err) {
    return { ...state, error: String(err) };
  }
}

export async function clearHistory(
  client: GatewayClient,
  state: ViewState,
): Promise<ViewState> {
  await client.clearHistory(state.sessionId);
  const view = await client.session(state.sessionId);
  // Turns reset; the artifact gallery is retained (responder semantics).
  return { ...state, turns: view.turns, error: null };
}

/**
 * Render a symbolic artifact as audio by injecting a single-task flow with
 * its note-list text, reusing the engine's own renderer.
 */
export async function previewSymbolicAsAudio(
  client: GatewayClient,
  state: ViewState,
  artifact: ArtifactView,
): Promise<ViewState> {
  if (artifact.modality !== "symbolic" || !artifact.preview) {
    throw new Error("preview requires a symbolic artifact with note-list text");
  }
  const flow = [{ id: "t1", task: "text-to-audio", args: { input: artifact.preview } }];
  const result = await client.chat(state.sessionId, "/flow " + JSON.stringify(flow));
  return applyChatResult(state, result);
}
