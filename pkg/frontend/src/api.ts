/**
 * Thin typed client over the musicagent gateway HTTP API. Every console
 * feature goes through this module; nothing else talks to the network.
 */

export interface PlanNode {
  id: string;
  task: string;
  deps: string[];
  args: Record<string, unknown>;
}

export interface TraceEvent {
  at: number;
  subtask: string;
  status: string;
  detail: string;
}

export interface ArtifactView {
  id: string;
  modality: "text" | "symbolic" | "audio";
  path: string;
  url: string;
  preview?: string;
  duration_seconds?: number;
}

export interface ChatResult {
  session_id: string;
  response: string;
  plan: PlanNode[];
  trace: TraceEvent[];
  artifacts: ArtifactView[];
  degraded: boolean;
}

export interface TurnView {
  role: "user" | "agent";
  text: string;
  artifact_ids: string[];
  at: number;
}

export interface SessionView {
  session_id: string;
  turns: TurnView[];
  artifacts: ArtifactView[];
}

export interface TaskView {
  name: string;
  input: string;
  output: string;
  category: string;
  description: string;
}

export class GatewayError extends Error {
  constructor(
    public status: number,
    public kind: string,
    detail: string,
  ) {
    super(detail);
    this.name = kind; // so String(err) reads "DecodeFailure: ..."
  }
}

async function asError(response: Response): Promise<GatewayError> {
  let kind = "HttpError";
  let detail = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    const inner = body.detail && typeof body.detail === "object" ? body.detail : body;
    kind = inner.error ?? kind;
    detail = inner.detail ?? detail;
  } catch {
    /* non-JSON error body; keep defaults */
  }
  return new GatewayError(response.status, kind, detail);
}

export class GatewayClient {
  constructor(readonly baseUrl: string) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) throw await asError(response);
    return (await response.json()) as T;
  }

  healthz(): Promise<{ status: string }> {
    return this.json("/healthz");
  }

  tasks(): Promise<TaskView[]> {
    return this.json("/tasks");
  }

  tools(): Promise<Array<Record<string, unknown>>> {
    return this.json("/tools");
  }

  patchToolAttributes(
    toolId: string,
    attributes: Record<string, number | string>,
  ): Promise<Record<string, unknown>> {
    return this.json(`/tools/${encodeURIComponent(toolId)}/attributes`, {
      method: "PATCH",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ attributes }),
    });
  }

  chat(sessionId: string, text: string): Promise<ChatResult> {
    return this.json("/chat", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, text }),
    });
  }

  session(sessionId: string): Promise<SessionView> {
    return this.json(`/sessions/${encodeURIComponent(sessionId)}`);
  }

  async clearHistory(sessionId: string): Promise<void> {
    await this.json(`/sessions/${encodeURIComponent(sessionId)}/history`, {
      method: "DELETE",
    });
  }

  upload(
    sessionId: string,
    data: Blob,
    filename: string,
    modality: string,
  ): Promise<ArtifactView> {
    const form = new FormData();
    form.append("file", data, filename);
    form.append("modality", modality);
    return this.json(`/sessions/${encodeURIComponent(sessionId)}/artifacts`, {
      method: "POST",
      body: form,
    });
  }

  /** Absolute URL for an artifact view's relative link. */
  artifactUrl(view: ArtifactView): string {
    return this.baseUrl + view.url;
  }

  async artifactResolves(view: ArtifactView): Promise<boolean> {
    const response = await fetch(this.artifactUrl(view));
    return response.ok;
  }
}
