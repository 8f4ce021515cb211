// Thin client for the session service JSON API.
async function asJson(response) {
    if (!response.ok) {
        let code = `HTTP_${response.status}`;
        try {
            const body = await response.json();
            if (body && body.code)
                code = body.code;
        }
        catch {
            // non-JSON error body
        }
        throw new ApiError(response.status, code);
    }
    return (await response.json());
}
export class ApiError extends Error {
    constructor(status, code) {
        super(`${status} ${code}`);
        this.status = status;
        this.code = code;
    }
}
export class Api {
    constructor(base) {
        this.base = base;
    }
    createSession(mode, firstName, userId) {
        const bindings = firstName ? { "user.first_name": firstName } : {};
        return fetch(`${this.base}/api/sessions`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ mode, bindings, user_id: userId }),
        }).then((r) => asJson(r));
    }
    postChoice(sessionId, optionId, menuSeq) {
        return fetch(`${this.base}/api/sessions/${sessionId}/choice`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ option_id: optionId, seq: menuSeq }),
        }).then((r) => asJson(r));
    }
    getTurn(sessionId, after = 0) {
        return fetch(`${this.base}/api/sessions/${sessionId}/turn?after=${after}`).then((r) => asJson(r));
    }
    getProgress(sessionId) {
        return fetch(`${this.base}/api/sessions/${sessionId}/progress`).then((r) => asJson(r));
    }
}
